#!/usr/bin/env node
import { readFileSync } from 'node:fs';
import { parseArgs } from 'node:util';

import { extract } from './extract.js';
import { JobError, parseJob } from './types.js';

export async function main(argv: string[]): Promise<number> {
  const { positionals } = parseArgs({
    args: argv,
    allowPositionals: true,
    options: {},
  });
  if (positionals.length !== 1) {
    console.error('usage: reidfuse-extract <job.json>');
    return 2;
  }

  try {
    const job = parseJob(JSON.parse(readFileSync(positionals[0], 'utf-8')));
    const result = await extract(job);
    console.log(
      `wrote ${result.records.length} records to ${result.manifestPath} ` +
        `(${Object.keys(result.vectorPaths).length} vector files, ` +
        `${result.skipped.length} skipped)`,
    );
    return 0;
  } catch (error) {
    if (error instanceof JobError) {
      console.error(`job error: ${error.message}`);
      return 1;
    }
    console.error(`extraction failed: ${error}`);
    return 1;
  }
}

const invokedDirectly =
  process.argv[1] && import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
