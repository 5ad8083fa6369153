import { readFileSync } from 'node:fs';
import { fileURLToPath } from 'node:url';

import { retryWithBackoff, RetryOptions } from './retry.js';
import { CLASS_LABELS, ClassLabel, JobError, ServiceConfig } from './types.js';

export class ServiceError extends Error {
  status?: number;

  constructor(message: string, status?: number) {
    super(message);
    this.status = status;
  }
}

function bearerToken(credentialsEnv: string | undefined): string | undefined {
  if (!credentialsEnv) return undefined;
  const token = process.env[credentialsEnv];
  if (!token) {
    throw new JobError(
      `credentials environment variable '${credentialsEnv}' is not set`,
    );
  }
  return token;
}

async function postJson(
  endpoint: string,
  body: unknown,
  credentialsEnv: string | undefined,
  retry: RetryOptions,
): Promise<unknown> {
  const token = bearerToken(credentialsEnv);
  return retryWithBackoff(async () => {
    const headers: Record<string, string> = { 'content-type': 'application/json' };
    if (token) headers.authorization = `Bearer ${token}`;
    let response: Response;
    try {
      response = await fetch(endpoint, {
        method: 'POST',
        headers,
        body: JSON.stringify(body),
      });
    } catch (error) {
      throw new ServiceError(`request to ${endpoint} failed: ${error}`);
    }
    if (!response.ok) {
      throw new ServiceError(
        `${endpoint} responded ${response.status}`,
        response.status,
      );
    }
    return response.json();
  }, retry);
}

/** POST an image to a hosted embedding model; returns the raw vector. */
export async function remoteEmbedding(
  endpoint: string,
  modelId: string,
  image: Buffer,
  credentialsEnv: string | undefined,
  retry: RetryOptions = {},
): Promise<Float32Array> {
  const reply = (await postJson(
    endpoint,
    { model: modelId, image: image.toString('base64') },
    credentialsEnv,
    retry,
  )) as { embedding?: unknown };
  if (!Array.isArray(reply.embedding) || reply.embedding.length === 0) {
    throw new ServiceError(`${endpoint} returned no embedding array`);
  }
  return Float32Array.from(reply.embedding as number[]);
}

export interface CaptionResult {
  classLabel: ClassLabel;
  caption: string;
}

export function loadPrompt(promptFile?: string): string {
  const url = promptFile
    ? promptFile
    : fileURLToPath(new URL('../prompts/caption_prompt_v1.txt', import.meta.url));
  return readFileSync(url, 'utf-8');
}

/**
 * Ask the vision-language service for a class label and a short caption.
 * Labels outside the engine's vocabulary are demoted to "unknown" (logged)
 * so the manifest always validates.
 */
export async function captionImage(
  config: ServiceConfig,
  image: Buffer,
  prompt: string,
  retry: RetryOptions = {},
): Promise<CaptionResult> {
  const reply = (await postJson(
    config.endpoint,
    { prompt, image: image.toString('base64') },
    config.credentials_env,
    retry,
  )) as { class_label?: unknown; caption?: unknown };

  const caption = typeof reply.caption === 'string' ? reply.caption : '';
  let classLabel: ClassLabel = 'unknown';
  if (typeof reply.class_label === 'string') {
    if ((CLASS_LABELS as string[]).includes(reply.class_label)) {
      classLabel = reply.class_label as ClassLabel;
    } else {
      console.error(
        `captioner returned unrecognized class '${reply.class_label}', using 'unknown'`,
      );
    }
  }
  return { classLabel, caption };
}
