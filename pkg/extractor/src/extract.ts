import { promises as fs } from 'node:fs';
import path from 'node:path';

import { writeFileAtomic } from './atomicFile.js';
import { parseItemPath, ParsedItem } from './idPattern.js';
import { encodeVectors } from './reidvec.js';
import { RetryOptions } from './retry.js';
import { captionImage, loadPrompt, remoteEmbedding } from './services.js';
import { stubDim, stubEmbedding } from './stubEmbedder.js';
import { Condition, ExtractionJob, JobError, ManifestRecord } from './types.js';

const IMAGE_EXTENSIONS = new Set(['.jpg', '.jpeg', '.png', '.webp', '.bmp']);

interface ScannedImage {
  relPath: string;
  absPath: string;
  parsed: ParsedItem;
  bytes: Buffer;
}

export interface ExtractResult {
  manifestPath: string;
  vectorPaths: Record<string, string>;
  records: ManifestRecord[];
  skipped: string[];
}

async function listImageFiles(root: string): Promise<string[]> {
  const out: string[] = [];
  async function walk(dir: string): Promise<void> {
    const entries = await fs.readdir(dir, { withFileTypes: true });
    for (const entry of entries) {
      const full = path.join(dir, entry.name);
      if (entry.isDirectory()) {
        await walk(full);
      } else if (IMAGE_EXTENSIONS.has(path.extname(entry.name).toLowerCase())) {
        out.push(path.relative(root, full));
      }
    }
  }
  await walk(root);
  out.sort();
  return out;
}

async function mapWithConcurrency<T, R>(
  items: T[],
  limit: number,
  fn: (item: T, index: number) => Promise<R>,
): Promise<R[]> {
  const results: R[] = new Array(items.length);
  let next = 0;
  async function worker(): Promise<void> {
    while (next < items.length) {
      const index = next++;
      results[index] = await fn(items[index], index);
    }
  }
  const workers = Array.from({ length: Math.min(limit, items.length) }, worker);
  await Promise.all(workers);
  return results;
}

function toManifestLine(record: ManifestRecord): string {
  // fixed key order keeps re-runs byte-identical
  const obj: Record<string, unknown> = {
    item_id: record.item_id,
    identity_id: record.identity_id,
    split: record.split,
    kind: record.kind,
    condition: record.condition,
    class_label: record.class_label,
  };
  if (record.camera_id !== undefined) obj.camera_id = record.camera_id;
  if (record.caption !== undefined) obj.caption = record.caption;
  if (record.base_item_id !== undefined) obj.base_item_id = record.base_item_id;
  if (record.excluded) obj.excluded = true;
  return JSON.stringify(obj);
}

function checkDim(rows: Float32Array[], what: string): void {
  const dims = new Set(rows.map((r) => r.length));
  if (dims.size > 1) {
    throw new JobError(
      `${what} returned inconsistent dimensions across batches: ` +
        [...dims].sort((a, b) => a - b).join(' vs '),
    );
  }
}

export async function extract(
  job: ExtractionJob,
  retry: RetryOptions = {},
): Promise<ExtractResult> {
  const pattern = new RegExp(job.id_pattern);
  const concurrency = job.concurrency ?? 4;
  const skipped: string[] = [];

  const relPaths = await listImageFiles(job.image_root);
  const images: ScannedImage[] = [];
  for (const relPath of relPaths) {
    const parsed = parseItemPath(pattern, relPath);
    if (!parsed) {
      console.error(`skipping ${relPath}: does not match id_pattern`);
      skipped.push(relPath);
      continue;
    }
    const absPath = path.join(job.image_root, relPath);
    let bytes: Buffer;
    try {
      bytes = await fs.readFile(absPath);
    } catch (error) {
      console.error(`skipping ${relPath}: unreadable (${error})`);
      skipped.push(relPath);
      continue;
    }
    images.push({ relPath, absPath, parsed, bytes });
  }

  const seen = new Map<string, string>();
  for (const image of images) {
    const previous = seen.get(image.parsed.itemId);
    if (previous !== undefined) {
      throw new JobError(
        `id_pattern produced item_id '${image.parsed.itemId}' for both ` +
          `'${previous}' and '${image.relPath}'`,
      );
    }
    seen.set(image.parsed.itemId, image.relPath);
  }

  const bases = images.filter((img) => img.parsed.kind === 'base');
  const refinements = images.filter((img) => img.parsed.kind === 'refinement');
  const baseById = new Map(bases.map((img) => [img.parsed.itemId, img]));
  for (const ref of refinements) {
    const base = baseById.get(ref.parsed.baseItemId!);
    if (!base) {
      throw new JobError(
        `refinement '${ref.relPath}' has no base image for item ` +
          `'${ref.parsed.baseItemId}'`,
      );
    }
    if (base.parsed.split !== ref.parsed.split) {
      throw new JobError(
        `refinement '${ref.relPath}' is in split ${ref.parsed.split} but its ` +
          `base image is in split ${base.parsed.split}`,
      );
    }
  }

  const offlineDim = stubDim(job.embedder_id);
  if (offlineDim === null && !job.embedder_endpoint) {
    throw new JobError(
      `embedder_id '${job.embedder_id}' is not an offline stub, ` +
        'so embedder_endpoint is required',
    );
  }
  const ordered = [...bases, ...refinements];
  const imageRows = await mapWithConcurrency(ordered, concurrency, async (img) => {
    if (offlineDim !== null) {
      return stubEmbedding(job.embedder_id, img.bytes, offlineDim);
    }
    return remoteEmbedding(
      job.embedder_endpoint!,
      job.embedder_id,
      img.bytes,
      job.embedder_credentials_env,
      retry,
    );
  });
  checkDim(imageRows, `embedder '${job.embedder_id}'`);
  const rowByItem = new Map(ordered.map((img, i) => [img.parsed.itemId, imageRows[i]]));

  const captionByItem = new Map<string, { classLabel: string; caption: string }>();
  const textRows = new Map<string, Float32Array>();
  if (job.captioner) {
    const prompt = loadPrompt(job.captioner.prompt_file);
    const textEmbedderId = job.text_embedder_id ?? 'stub-sha256-32d';
    const textDim = stubDim(textEmbedderId);
    if (textDim === null && !job.text_embedder_endpoint) {
      throw new JobError(
        `text_embedder_id '${textEmbedderId}' is not an offline stub, ` +
          'so text_embedder_endpoint is required',
      );
    }
    await mapWithConcurrency(bases, concurrency, async (img) => {
      const result = await captionImage(job.captioner!, img.bytes, prompt, retry);
      captionByItem.set(img.parsed.itemId, result);
      const row =
        textDim !== null
          ? stubEmbedding(textEmbedderId, Buffer.from(result.caption, 'utf-8'), textDim)
          : await remoteEmbedding(
              job.text_embedder_endpoint!,
              textEmbedderId,
              Buffer.from(result.caption, 'utf-8'),
              job.text_embedder_credentials_env,
              retry,
            );
      textRows.set(img.parsed.itemId, row);
    });
    checkDim([...textRows.values()], `text embedder '${textEmbedderId}'`);
  }

  const records: ManifestRecord[] = [];
  for (const img of bases) {
    const captioned = captionByItem.get(img.parsed.itemId);
    records.push({
      item_id: img.parsed.itemId,
      identity_id: img.parsed.identityId,
      split: img.parsed.split,
      kind: 'base',
      condition: 'none',
      class_label: (captioned?.classLabel as ManifestRecord['class_label']) ?? 'unknown',
      camera_id: img.parsed.cameraId,
      caption: captioned?.caption,
    });
  }
  for (const img of refinements) {
    records.push({
      item_id: img.parsed.itemId,
      identity_id: img.parsed.identityId,
      split: img.parsed.split,
      kind: 'refinement',
      condition: img.parsed.condition,
      class_label: 'unknown',
      camera_id: img.parsed.cameraId,
      base_item_id: img.parsed.baseItemId,
    });
  }
  if (job.captioner) {
    for (const img of bases) {
      const captioned = captionByItem.get(img.parsed.itemId)!;
      records.push({
        item_id: `${img.parsed.itemId}_txt`,
        identity_id: img.parsed.identityId,
        split: img.parsed.split,
        kind: 'text',
        condition: 'none',
        class_label: (captioned.classLabel as ManifestRecord['class_label']) ?? 'unknown',
        caption: captioned.caption,
        base_item_id: img.parsed.itemId,
      });
    }
  }
  if (records.length === 0) {
    throw new JobError(`no image under ${job.image_root} matched id_pattern`);
  }

  const channels = new Map<string, Float32Array[]>();
  channels.set(
    'base',
    bases.map((img) => rowByItem.get(img.parsed.itemId)!),
  );
  for (const condition of ['A', 'B', 'C'] as Condition[]) {
    const rows = refinements
      .filter((img) => img.parsed.condition === condition)
      .map((img) => rowByItem.get(img.parsed.itemId)!);
    if (rows.length > 0) channels.set(`refinement_${condition}`, rows);
  }
  if (textRows.size > 0) {
    channels.set(
      'text',
      bases.map((img) => textRows.get(img.parsed.itemId)!),
    );
  }

  const manifestPath = path.join(job.output_dir, 'manifest.jsonl');
  await writeFileAtomic(
    manifestPath,
    records.map(toManifestLine).join('\n') + '\n',
  );
  const vectorPaths: Record<string, string> = {};
  for (const [channel, rows] of channels) {
    const vecPath = path.join(job.output_dir, `${channel}.vec`);
    await writeFileAtomic(vecPath, encodeVectors(rows));
    vectorPaths[channel] = vecPath;
  }

  return { manifestPath, vectorPaths, records, skipped };
}
