export type Split = 'query' | 'gallery' | 'train';
export type Kind = 'base' | 'refinement' | 'text';
export type Condition = 'none' | 'A' | 'B' | 'C';
export type ClassLabel = 'trash_bin' | 'waste_container' | 'crosswalk' | 'unknown';

export const CLASS_LABELS: ClassLabel[] = [
  'trash_bin',
  'waste_container',
  'crosswalk',
  'unknown',
];

/** One manifest line, mirroring the engine's JSONL schema. */
export interface ManifestRecord {
  item_id: string;
  identity_id: string;
  split: Split;
  kind: Kind;
  condition: Condition;
  class_label: ClassLabel;
  camera_id?: string;
  caption?: string;
  base_item_id?: string;
  excluded?: boolean;
}

export interface ServiceConfig {
  endpoint: string;
  /** name of the environment variable holding the bearer token */
  credentials_env?: string;
  prompt_file?: string;
}

export interface ExtractionJob {
  image_root: string;
  /**
   * Regex applied to each file path relative to image_root (forward
   * slashes). Named groups:
   *   identity  (required) object instance id
   *   split     (required) query | gallery | train
   *   item      (optional) per-identity item tag; defaults to the file stem
   *   condition (optional) A | B | C; presence makes the record a refinement
   *   camera    (optional) camera id
   * Files that do not match are skipped with a log line.
   */
  id_pattern: string;
  /** "stub-sha256-<dim>d" for the offline embedder, else a remote model id */
  embedder_id: string;
  embedder_endpoint?: string;
  embedder_credentials_env?: string;
  captioner?: ServiceConfig;
  /** caption vectors; defaults to the offline stub at 32 dims */
  text_embedder_id?: string;
  text_embedder_endpoint?: string;
  text_embedder_credentials_env?: string;
  output_dir: string;
  concurrency?: number;
}

export class JobError extends Error {}

function expectString(obj: Record<string, unknown>, key: string): string {
  const value = obj[key];
  if (typeof value !== 'string' || value.length === 0) {
    throw new JobError(`job field '${key}' must be a non-empty string`);
  }
  return value;
}

function optionalString(obj: Record<string, unknown>, key: string): string | undefined {
  const value = obj[key];
  if (value === undefined || value === null) return undefined;
  if (typeof value !== 'string') {
    throw new JobError(`job field '${key}' must be a string`);
  }
  return value;
}

export function parseJob(raw: unknown): ExtractionJob {
  if (typeof raw !== 'object' || raw === null || Array.isArray(raw)) {
    throw new JobError('job file must contain a JSON object');
  }
  const obj = raw as Record<string, unknown>;

  const job: ExtractionJob = {
    image_root: expectString(obj, 'image_root'),
    id_pattern: expectString(obj, 'id_pattern'),
    embedder_id: expectString(obj, 'embedder_id'),
    embedder_endpoint: optionalString(obj, 'embedder_endpoint'),
    embedder_credentials_env: optionalString(obj, 'embedder_credentials_env'),
    text_embedder_id: optionalString(obj, 'text_embedder_id'),
    text_embedder_endpoint: optionalString(obj, 'text_embedder_endpoint'),
    text_embedder_credentials_env: optionalString(obj, 'text_embedder_credentials_env'),
    output_dir: expectString(obj, 'output_dir'),
  };

  if (obj.concurrency !== undefined) {
    if (typeof obj.concurrency !== 'number' || obj.concurrency < 1) {
      throw new JobError("job field 'concurrency' must be a positive number");
    }
    job.concurrency = Math.floor(obj.concurrency);
  }

  if (obj.captioner !== undefined) {
    if (typeof obj.captioner !== 'object' || obj.captioner === null) {
      throw new JobError("job field 'captioner' must be an object");
    }
    const cap = obj.captioner as Record<string, unknown>;
    job.captioner = {
      endpoint: expectString(cap, 'endpoint'),
      credentials_env: optionalString(cap, 'credentials_env'),
      prompt_file: optionalString(cap, 'prompt_file'),
    };
  }

  try {
    new RegExp(job.id_pattern);
  } catch (error) {
    throw new JobError(`job field 'id_pattern' is not a valid regex: ${error}`);
  }

  return job;
}
