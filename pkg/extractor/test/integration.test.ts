import { spawnSync } from 'node:child_process';
import { promises as fs } from 'node:fs';
import os from 'node:os';
import path from 'node:path';
import { fileURLToPath } from 'node:url';
import { afterEach, describe, expect, it } from 'vitest';

import { extract } from '../src/extract.js';

// The sibling Python package is the consumer of everything this adapter
// writes, so the real check is running its own validator over our output.
const ENGINE_SRC = fileURLToPath(new URL('../../src', import.meta.url));

const pythonAvailable =
  spawnSync('python3', ['--version'], { encoding: 'utf-8' }).status === 0;

const tmpDirs: string[] = [];

afterEach(async () => {
  while (tmpDirs.length) {
    await fs.rm(tmpDirs.pop()!, { recursive: true, force: true });
  }
});

function runEngine(args: string[]) {
  return spawnSync('python3', ['-m', 'reidfuse.cli', ...args], {
    encoding: 'utf-8',
    env: { ...process.env, PYTHONPATH: ENGINE_SRC },
  });
}

describe.skipIf(!pythonAvailable)('engine compatibility', () => {
  it('extracted outputs pass the engine validator unmodified', async () => {
    const root = await fs.mkdtemp(path.join(os.tmpdir(), 'compat-'));
    tmpDirs.push(root);
    const imageRoot = path.join(root, 'images');
    const files = [
      'query/id000_img0.png',
      'query/id001_img0.png',
      'gallery/id000_img1.png',
      'gallery/id000_img2.png',
      'gallery/id001_img1.png',
      'refined/A/query/id000_img0.png',
      'refined/A/query/id001_img0.png',
      'refined/A/gallery/id000_img1.png',
      'refined/A/gallery/id000_img2.png',
      'refined/A/gallery/id001_img1.png',
    ];
    for (const rel of files) {
      const full = path.join(imageRoot, rel);
      await fs.mkdir(path.dirname(full), { recursive: true });
      await fs.writeFile(full, `jpeg bytes for ${rel}`);
    }

    const outDir = path.join(root, 'out');
    const result = await extract({
      image_root: imageRoot,
      id_pattern:
        '^(?:refined/(?<condition>[ABC])/)?(?<split>query|gallery)/' +
        '(?<identity>id\\d+)_(?<item>img\\d+)\\.png$',
      embedder_id: 'stub-sha256-32d',
      output_dir: outDir,
    });

    const validate = runEngine([
      'validate',
      result.manifestPath,
      '--vectors',
      `base=${result.vectorPaths.base}`,
      '--vectors',
      `refinement_A=${result.vectorPaths.refinement_A}`,
    ]);
    expect(validate.stderr).toBe('');
    expect(validate.status).toBe(0);
    expect(validate.stdout).toContain('10 records OK');
    expect(validate.stdout).toContain('base: 5 x 32 vectors OK');
    expect(validate.stdout).toContain('refinement_A: 5 x 32 vectors OK');
  });

  it('an experiment config can run directly on extracted files', async () => {
    const root = await fs.mkdtemp(path.join(os.tmpdir(), 'compat-run-'));
    tmpDirs.push(root);
    const imageRoot = path.join(root, 'images');
    // two items per identity in the gallery so every query has a positive
    for (const identity of ['id000', 'id001', 'id002']) {
      await fs.mkdir(path.join(imageRoot, 'query'), { recursive: true });
      await fs.mkdir(path.join(imageRoot, 'gallery'), { recursive: true });
      await fs.writeFile(
        path.join(imageRoot, `query/${identity}_img0.png`),
        `probe of ${identity}`,
      );
      for (const item of ['img1', 'img2']) {
        await fs.writeFile(
          path.join(imageRoot, `gallery/${identity}_${item}.png`),
          `${identity} seen again as ${item}`,
        );
      }
    }

    const outDir = path.join(root, 'out');
    await extract({
      image_root: imageRoot,
      id_pattern:
        '^(?<split>query|gallery)/(?<identity>id\\d+)_(?<item>img\\d+)\\.png$',
      embedder_id: 'stub-sha256-16d',
      output_dir: outDir,
    });

    const configPath = path.join(root, 'exp.yaml');
    await fs.writeFile(
      configPath,
      [
        'experiment: extracted-smoke',
        'data:',
        `  manifest: ${path.join(outDir, 'manifest.jsonl')}`,
        '  channels:',
        `    base: ${path.join(outDir, 'base.vec')}`,
        'runs:',
        '  - label: baseline',
        '    base: {channel: base, label: stub}',
        '',
      ].join('\n'),
    );

    const run = runEngine(['run', configPath, '--format', 'json']);
    expect(run.stderr).toBe('');
    expect(run.status).toBe(0);
    const payload = JSON.parse(run.stdout);
    expect(payload.reports[0].run_label).toBe('baseline');
    expect(payload.reports[0].map).toBeGreaterThanOrEqual(0);
    expect(payload.reports[0].map).toBeLessThanOrEqual(1);
  });
});
