import path from 'node:path';

import { Condition, JobError, Kind, Split } from './types.js';

export interface ParsedItem {
  itemId: string;
  identityId: string;
  split: Split;
  kind: Kind;
  condition: Condition;
  cameraId?: string;
  /** for refinements: the item_id of the base image this one refines */
  baseItemId?: string;
}

const SPLITS = new Set<string>(['query', 'gallery', 'train']);
const CONDITIONS = new Set<string>(['A', 'B', 'C']);

/**
 * Apply the job's id_pattern to one relative path. Returns null when the
 * path does not match (caller logs and skips). Identity + item compose the
 * item_id, so ids stay unique across identities; a refinement gets a
 * "_ref<condition>" suffix and points back at the matching base item.
 */
export function parseItemPath(pattern: RegExp, relPath: string): ParsedItem | null {
  const match = pattern.exec(relPath.split(path.sep).join('/'));
  if (!match || !match.groups) return null;

  const groups = match.groups;
  const identity = groups.identity;
  const split = groups.split;
  if (!identity) {
    throw new JobError("id_pattern matched but captured no 'identity' group");
  }
  if (!split || !SPLITS.has(split)) {
    throw new JobError(
      `id_pattern captured split '${split}' for '${relPath}' ` +
        "(expected query, gallery, or train)",
    );
  }

  const stem = path.basename(relPath, path.extname(relPath));
  const item = groups.item ?? stem;
  const baseItemId = `${identity}_${item}`;

  const condition = groups.condition;
  if (condition !== undefined && !CONDITIONS.has(condition)) {
    throw new JobError(
      `id_pattern captured condition '${condition}' for '${relPath}' ` +
        '(expected A, B, or C)',
    );
  }

  if (condition) {
    return {
      itemId: `${baseItemId}_ref${condition}`,
      identityId: identity,
      split: split as Split,
      kind: 'refinement',
      condition: condition as Condition,
      cameraId: groups.camera,
      baseItemId,
    };
  }
  return {
    itemId: baseItemId,
    identityId: identity,
    split: split as Split,
    kind: 'base',
    condition: 'none',
    cameraId: groups.camera,
  };
}
