export interface RetryOptions {
  maxRetries?: number;
  initialDelayMs?: number;
  maxDelayMs?: number;
  /** injectable for tests */
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

/**
 * Exponential backoff for flaky HTTP services. Client errors (4xx) fail
 * immediately except 408/429; everything else retries up to maxRetries.
 */
export async function retryWithBackoff<T>(
  operation: () => Promise<T>,
  options: RetryOptions = {},
): Promise<T> {
  const maxRetries = options.maxRetries ?? 3;
  const initialDelayMs = options.initialDelayMs ?? 250;
  const maxDelayMs = options.maxDelayMs ?? 4000;
  const sleep = options.sleep ?? defaultSleep;

  let lastError: unknown;
  for (let attempt = 0; attempt <= maxRetries; attempt++) {
    try {
      return await operation();
    } catch (error) {
      lastError = error;
      const status = (error as { status?: number }).status;
      const retriable = status === undefined || status >= 500 || status === 408 || status === 429;
      if (!retriable || attempt === maxRetries) {
        break;
      }
      await sleep(Math.min(initialDelayMs * 2 ** attempt, maxDelayMs));
    }
  }
  throw lastError;
}
