export interface ItemContext {
  question: string;
  gold_answer: string;
  video_uri?: string | null;
  video_surrogate?: string | null;
  prior_reasons?: string[];
}

export interface ReviewItem {
  item_id: string;
  sample_id: string;
  attempt_no: number;
  chain: string;
  context: ItemContext;
  state: string;
}

export interface QueueStats {
  pending: number;
  approved: number;
  edited: number;
  rejected: number;
}

export type DecisionAction = "approve" | "edit" | "reject";

export interface Decision {
  action: DecisionAction;
  reviewer: string;
  chain?: string;
  reason?: string;
}

export interface DecisionResult {
  status: number;
  body: {
    item?: ReviewItem;
    error?: string;
    validation?: { verdict: string; violations: { rule_id: string; detail: string }[] };
  };
}
