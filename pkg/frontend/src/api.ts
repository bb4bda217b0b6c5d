import type { Decision, DecisionResult, QueueStats, ReviewItem } from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ReviewApi {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  async nextItem(reviewer: string): Promise<ReviewItem | null> {
    const res = await this.fetchFn(
      `${this.baseUrl}/api/queue/next?reviewer=${encodeURIComponent(reviewer)}`,
    );
    if (!res.ok) throw new Error(`queue/next failed: ${res.status}`);
    const body = await res.json();
    return (body.item as ReviewItem | null) ?? null;
  }

  async getItem(itemId: string): Promise<ReviewItem | null> {
    const res = await this.fetchFn(
      `${this.baseUrl}/api/items/${encodeURIComponent(itemId)}`,
    );
    if (res.status === 404) return null;
    if (!res.ok) throw new Error(`items/${itemId} failed: ${res.status}`);
    return (await res.json()).item as ReviewItem;
  }

  async stats(): Promise<QueueStats> {
    const res = await this.fetchFn(`${this.baseUrl}/api/stats`);
    if (!res.ok) throw new Error(`stats failed: ${res.status}`);
    return (await res.json()) as QueueStats;
  }

  // Resolves for every HTTP outcome (200/400/404/409 all carry meaning for
  // the review flow); rejects only on transport failure.
  async decide(itemId: string, decision: Decision): Promise<DecisionResult> {
    const res = await this.fetchFn(
      `${this.baseUrl}/api/items/${encodeURIComponent(itemId)}/decision`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(decision),
      },
    );
    return { status: res.status, body: await res.json() };
  }

  videoUrl(sampleId: string): string {
    return `${this.baseUrl}/api/video/${encodeURIComponent(sampleId)}`;
  }
}
