import zlib from 'node:zlib';

// REIDVEC1 layout (little-endian): 8-byte ASCII magic, uint32 row count,
// uint32 dim, count*dim float32 row-major, uint32 CRC32 of the float payload.
const MAGIC = Buffer.from('REIDVEC1', 'ascii');
const HEADER_BYTES = 16;

export function encodeVectors(rows: Float32Array[]): Buffer {
  if (rows.length === 0) {
    throw new Error('cannot encode an empty vector set');
  }
  const dim = rows[0].length;
  for (const [i, row] of rows.entries()) {
    if (row.length !== dim) {
      throw new Error(`row ${i} has dim ${row.length}, expected ${dim}`);
    }
  }

  const header = Buffer.alloc(HEADER_BYTES);
  MAGIC.copy(header, 0);
  header.writeUInt32LE(rows.length, 8);
  header.writeUInt32LE(dim, 12);

  const payload = Buffer.alloc(rows.length * dim * 4);
  rows.forEach((row, i) => {
    for (let j = 0; j < dim; j++) {
      payload.writeFloatLE(row[j], (i * dim + j) * 4);
    }
  });

  const trailer = Buffer.alloc(4);
  trailer.writeUInt32LE(zlib.crc32(payload), 0);
  return Buffer.concat([header, payload, trailer]);
}

export function decodeVectors(data: Buffer): Float32Array[] {
  if (data.length < HEADER_BYTES || !data.subarray(0, 8).equals(MAGIC)) {
    throw new Error('not a REIDVEC1 buffer');
  }
  const count = data.readUInt32LE(8);
  const dim = data.readUInt32LE(12);
  const payloadBytes = count * dim * 4;
  if (
    data.length !== HEADER_BYTES + payloadBytes &&
    data.length !== HEADER_BYTES + payloadBytes + 4
  ) {
    throw new Error(
      `REIDVEC1 length mismatch: ${data.length} bytes for ${count} x ${dim}`,
    );
  }
  if (data.length === HEADER_BYTES + payloadBytes + 4) {
    const stored = data.readUInt32LE(HEADER_BYTES + payloadBytes);
    const actual = zlib.crc32(data.subarray(HEADER_BYTES, HEADER_BYTES + payloadBytes));
    if (stored !== actual) {
      throw new Error('REIDVEC1 checksum mismatch');
    }
  }

  const rows: Float32Array[] = [];
  for (let i = 0; i < count; i++) {
    const row = new Float32Array(dim);
    for (let j = 0; j < dim; j++) {
      row[j] = data.readFloatLE(HEADER_BYTES + (i * dim + j) * 4);
    }
    rows.push(row);
  }
  return rows;
}
