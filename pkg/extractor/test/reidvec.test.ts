import zlib from 'node:zlib';
import { describe, expect, it } from 'vitest';

import { decodeVectors, encodeVectors } from '../src/reidvec.js';

describe('REIDVEC1 encoding', () => {
  it('lays out magic, count, dim, payload, crc', () => {
    const rows = [Float32Array.from([1, 2, 3]), Float32Array.from([4, 5, 6])];
    const buf = encodeVectors(rows);

    expect(buf.subarray(0, 8).toString('ascii')).toBe('REIDVEC1');
    expect(buf.readUInt32LE(8)).toBe(2);
    expect(buf.readUInt32LE(12)).toBe(3);
    expect(buf.length).toBe(16 + 2 * 3 * 4 + 4);
    expect(buf.readFloatLE(16)).toBe(1);
    expect(buf.readFloatLE(16 + 5 * 4)).toBe(6);
    expect(buf.readUInt32LE(buf.length - 4)).toBe(
      zlib.crc32(buf.subarray(16, buf.length - 4)),
    );
  });

  it('round-trips bit-exactly', () => {
    const rows = [
      Float32Array.from([0.1, -2.5e-8, 3e20]),
      Float32Array.from([Number.EPSILON, -0, 1 / 3]),
    ];
    const decoded = decodeVectors(encodeVectors(rows));
    expect(decoded.length).toBe(2);
    for (let i = 0; i < rows.length; i++) {
      expect([...decoded[i]]).toEqual([...rows[i]]);
    }
  });

  it('accepts files without the crc trailer', () => {
    const full = encodeVectors([Float32Array.from([7, 8])]);
    const trimmed = full.subarray(0, full.length - 4);
    expect([...decodeVectors(Buffer.from(trimmed))[0]]).toEqual([7, 8]);
  });

  it('rejects corrupted payloads', () => {
    const buf = encodeVectors([Float32Array.from([7, 8])]);
    buf[20] ^= 0xff;
    expect(() => decodeVectors(buf)).toThrow(/checksum/);
  });

  it('rejects ragged rows and empty input', () => {
    expect(() =>
      encodeVectors([Float32Array.from([1]), Float32Array.from([1, 2])]),
    ).toThrow(/dim/);
    expect(() => encodeVectors([])).toThrow(/empty/);
  });
});
