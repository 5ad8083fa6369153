import { promises as fs } from 'node:fs';
import os from 'node:os';
import path from 'node:path';
import { afterEach, describe, expect, it } from 'vitest';

import { main } from '../src/cli.js';

const tmpDirs: string[] = [];

afterEach(async () => {
  while (tmpDirs.length) {
    await fs.rm(tmpDirs.pop()!, { recursive: true, force: true });
  }
});

async function writeJobFile(): Promise<{ jobPath: string; outDir: string }> {
  const root = await fs.mkdtemp(path.join(os.tmpdir(), 'cli-'));
  tmpDirs.push(root);
  const imageRoot = path.join(root, 'images');
  await fs.mkdir(path.join(imageRoot, 'query'), { recursive: true });
  await fs.mkdir(path.join(imageRoot, 'gallery'), { recursive: true });
  await fs.writeFile(path.join(imageRoot, 'query/id000_img0.png'), 'a');
  await fs.writeFile(path.join(imageRoot, 'gallery/id000_img1.png'), 'b');
  const outDir = path.join(root, 'out');
  const jobPath = path.join(root, 'job.json');
  await fs.writeFile(
    jobPath,
    JSON.stringify({
      image_root: imageRoot,
      id_pattern:
        '^(?<split>query|gallery)/(?<identity>id\\d+)_(?<item>img\\d+)\\.png$',
      embedder_id: 'stub-sha256-8d',
      output_dir: outDir,
    }),
  );
  return { jobPath, outDir };
}

describe('cli', () => {
  it('runs a job file and writes the outputs', async () => {
    const { jobPath, outDir } = await writeJobFile();
    expect(await main([jobPath])).toBe(0);
    const names = (await fs.readdir(outDir)).sort();
    expect(names).toEqual(['base.vec', 'manifest.jsonl']);
  });

  it('exits 2 without a job file argument', async () => {
    expect(await main([])).toBe(2);
  });

  it('exits 1 on an invalid job', async () => {
    const root = await fs.mkdtemp(path.join(os.tmpdir(), 'cli-bad-'));
    tmpDirs.push(root);
    const jobPath = path.join(root, 'job.json');
    await fs.writeFile(jobPath, JSON.stringify({ image_root: 'x' }));
    expect(await main([jobPath])).toBe(1);
  });
});
