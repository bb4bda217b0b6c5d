import type { ReviewApi } from "./api.js";
import type { Decision, DecisionResult } from "./types.js";

export interface OutboxEntry {
  itemId: string;
  decision: Decision;
  attempts: number;
}

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export type ResultHandler = (
  itemId: string,
  decision: Decision,
  result: DecisionResult,
) => void;

const STORAGE_KEY = "chainforge.review.outbox";

// Pending-decision queue: a decision is retained (and persisted) until the
// server answers with any HTTP status; transport failures leave it queued
// for the next flush, so nothing is ever silently dropped. One POST per
// (item, action) — repeat submissions are deduplicated.
export class DecisionOutbox {
  private queue: OutboxEntry[] = [];
  private submitted = new Set<string>();
  private flushing = false;

  constructor(
    private api: ReviewApi,
    private onResult: ResultHandler,
    private storage?: StorageLike,
  ) {
    this.restore();
  }

  get pending(): number {
    return this.queue.length;
  }

  submit(itemId: string, decision: Decision): boolean {
    const key = `${itemId}:${decision.action}`;
    if (this.submitted.has(key)) return false;
    this.submitted.add(key);
    this.queue.push({ itemId, decision, attempts: 0 });
    this.persist();
    return true;
  }

  async flush(): Promise<void> {
    if (this.flushing) return;
    this.flushing = true;
    try {
      while (this.queue.length > 0) {
        const entry = this.queue[0];
        entry.attempts += 1;
        let result: DecisionResult;
        try {
          result = await this.api.decide(entry.itemId, entry.decision);
        } catch {
          // network loss: keep the entry, try again on the next flush
          this.persist();
          return;
        }
        this.queue.shift();
        this.persist();
        this.onResult(entry.itemId, entry.decision, result);
      }
    } finally {
      this.flushing = false;
    }
  }

  private persist(): void {
    this.storage?.setItem(STORAGE_KEY, JSON.stringify(this.queue));
  }

  private restore(): void {
    const raw = this.storage?.getItem(STORAGE_KEY);
    if (!raw) return;
    try {
      const entries = JSON.parse(raw) as OutboxEntry[];
      for (const entry of entries) {
        this.queue.push(entry);
        this.submitted.add(`${entry.itemId}:${entry.decision.action}`);
      }
    } catch {
      // corrupt persisted state starts an empty outbox
    }
  }
}
