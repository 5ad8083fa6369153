import { promises as fs } from 'node:fs';
import path from 'node:path';

/** Write via temp file + rename so readers never observe a partial file. */
export async function writeFileAtomic(filePath: string, data: Buffer | string): Promise<void> {
  const dir = path.dirname(filePath);
  await fs.mkdir(dir, { recursive: true });
  const tmp = path.join(dir, `.${path.basename(filePath)}.tmp-${process.pid}`);
  await fs.writeFile(tmp, data);
  await fs.rename(tmp, filePath);
}
