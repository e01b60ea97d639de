// Outbound rate limiting: at most N frames per second leave the client.

export class RateLimiter {
  private lastAt = -Infinity;
  private readonly minIntervalMs: number;

  constructor(maxPerSecond: number) {
    this.minIntervalMs = 1000 / maxPerSecond;
  }

  /** True (and consumes the slot) when a send is allowed at nowMs. */
  tryAcquire(nowMs: number): boolean {
    if (nowMs - this.lastAt < this.minIntervalMs) return false;
    this.lastAt = nowMs;
    return true;
  }
}
