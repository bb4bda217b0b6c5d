import { ReviewApi } from "./api.js";
import { EditBuffer } from "./editBuffer.js";
import { DecisionOutbox } from "./outbox.js";
import type { Decision, DecisionResult, ReviewItem } from "./types.js";

type Mode = "idle" | "viewing" | "editing" | "rejecting";

const POLL_MS = 2500;
const OUTBOX_FLUSH_MS = 2000;

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

class ReviewApp {
  private api = new ReviewApi("");
  private outbox: DecisionOutbox;
  private item: ReviewItem | null = null;
  private mode: Mode = "idle";
  private buffer = new EditBuffer();
  private reviewer: string;

  constructor() {
    this.reviewer =
      window.localStorage.getItem("chainforge.reviewer") ??
      window.prompt("Reviewer name:")?.trim() ??
      "anonymous";
    window.localStorage.setItem("chainforge.reviewer", this.reviewer);
    this.outbox = new DecisionOutbox(
      this.api,
      (itemId, decision, result) => this.onDecisionResult(itemId, decision, result),
      window.localStorage,
    );
    this.bind();
    window.setInterval(() => this.refreshStats(), POLL_MS);
    window.setInterval(() => void this.outbox.flush(), OUTBOX_FLUSH_MS);
    void this.refreshStats();
    void this.fetchNext();
  }

  private bind(): void {
    $("approve-btn").onclick = () => this.approve();
    $("edit-btn").onclick = () => this.enterEdit();
    $("reject-btn").onclick = () => this.enterReject();
    $("edit-save").onclick = () => this.submitEdit();
    $("edit-cancel").onclick = () => this.leaveSubMode();
    $("reject-confirm").onclick = () => this.submitReject();
    $("reject-cancel").onclick = () => this.leaveSubMode();
    $("skip-btn").onclick = () => void this.fetchNext();
    ($("reject-reason") as HTMLTextAreaElement).oninput = () => this.renderRejectGate();

    document.addEventListener("keydown", (ev) => {
      const target = ev.target as HTMLElement;
      if (target.tagName === "TEXTAREA" || target.tagName === "INPUT") return;
      if (this.mode !== "viewing") return;
      if (ev.key === "a" || ev.key === "A") this.approve();
      if (ev.key === "e" || ev.key === "E") this.enterEdit();
      if (ev.key === "r" || ev.key === "R") this.enterReject();
    });
  }

  // -- queue flow -----------------------------------------------------------

  private async fetchNext(): Promise<void> {
    this.mode = "idle";
    this.item = null;
    this.render();
    try {
      this.item = await this.api.nextItem(this.reviewer);
    } catch {
      this.toast("service unreachable, retrying…");
      window.setTimeout(() => void this.fetchNext(), POLL_MS);
      return;
    }
    if (this.item === null) {
      window.setTimeout(() => void this.fetchNext(), POLL_MS);
    } else {
      this.mode = "viewing";
    }
    this.render();
  }

  private decide(decision: Decision): void {
    if (!this.item) return;
    const accepted = this.outbox.submit(this.item.item_id, decision);
    if (!accepted) {
      this.toast("decision already submitted for this item");
      return;
    }
    void this.outbox.flush();
    void this.fetchNext();
  }

  private approve(): void {
    this.decide({ action: "approve", reviewer: this.reviewer });
  }

  private enterEdit(): void {
    if (!this.item) return;
    if (!this.buffer.load(this.item.chain)) {
      this.toast("chain failed to parse locally");
      return;
    }
    this.mode = "editing";
    this.render();
  }

  private submitEdit(): void {
    // client-side gate: never POST a chain the server would reject
    if (!this.buffer.canSubmit()) return;
    this.decide({
      action: "edit",
      reviewer: this.reviewer,
      chain: this.buffer.serialized(),
    });
  }

  private enterReject(): void {
    if (!this.item) return;
    this.mode = "rejecting";
    ($("reject-reason") as HTMLTextAreaElement).value = "";
    ($("reject-hallucination") as HTMLInputElement).checked = false;
    this.render();
  }

  private submitReject(): void {
    const reasonBox = $("reject-reason") as HTMLTextAreaElement;
    const reason = reasonBox.value.trim();
    if (!reason) return; // reason is mandatory
    const tagged = ($("reject-hallucination") as HTMLInputElement).checked
      ? `[hallucination] ${reason}`
      : reason;
    this.decide({ action: "reject", reviewer: this.reviewer, reason: tagged });
  }

  private leaveSubMode(): void {
    this.mode = this.item ? "viewing" : "idle";
    this.render();
  }

  private onDecisionResult(
    itemId: string,
    decision: Decision,
    result: DecisionResult,
  ): void {
    if (result.status === 200) {
      this.toast(`${decision.action} recorded`);
    } else if (result.status === 409) {
      this.toast("item was decided elsewhere — fetching next");
    } else if (result.status === 400 && result.body.validation) {
      const rules = result.body.validation.violations
        .map((v) => v.rule_id)
        .join(", ");
      this.toast(`server rejected edit: ${rules}`);
    } else {
      this.toast(`decision failed (${result.status}): ${result.body.error ?? ""}`);
    }
    void this.refreshStats();
  }

  private async refreshStats(): Promise<void> {
    try {
      const stats = await this.api.stats();
      $("stats").textContent =
        `pending ${stats.pending} · approved ${stats.approved} · ` +
        `edited ${stats.edited} · rejected ${stats.rejected}` +
        (this.outbox.pending ? ` · unsent ${this.outbox.pending}` : "");
    } catch {
      $("stats").textContent = "stats unavailable";
    }
  }

  // -- rendering --------------------------------------------------------------

  private render(): void {
    $("reviewer-name").textContent = this.reviewer;
    $("empty-state").hidden = this.item !== null;
    $("item-card").hidden = this.item === null;
    $("edit-panel").hidden = this.mode !== "editing";
    $("reject-panel").hidden = this.mode !== "rejecting";
    $("view-actions").hidden = this.mode !== "viewing";
    if (!this.item) return;

    const ctx = this.item.context;
    $("attempt-badge").textContent = `attempt ${this.item.attempt_no}`;
    $("question").textContent = ctx.question ?? "";
    $("answer").textContent = ctx.gold_answer ?? "";

    const video = $("video-player") as HTMLVideoElement;
    const surrogate = $("surrogate");
    if (ctx.video_uri) {
      video.hidden = false;
      video.src = this.api.videoUrl(this.item.sample_id);
    } else {
      video.hidden = true;
      video.removeAttribute("src");
    }
    surrogate.hidden = !ctx.video_surrogate;
    surrogate.textContent = ctx.video_surrogate ?? "";

    const reasons = $("prior-reasons");
    const prior = ctx.prior_reasons ?? [];
    reasons.hidden = prior.length === 0;
    reasons.innerHTML = "";
    if (prior.length) {
      const title = document.createElement("div");
      title.className = "reasons-title";
      title.textContent = "earlier rejection reasons";
      reasons.appendChild(title);
      for (const reason of prior) {
        const li = document.createElement("div");
        li.className = "reason";
        li.textContent = reason;
        reasons.appendChild(li);
      }
    }

    this.renderChain();
    if (this.mode === "editing") this.renderEditor();
    if (this.mode === "rejecting") this.renderRejectGate();
  }

  private renderChain(): void {
    const list = $("chain-view");
    list.innerHTML = "";
    const events = this.item ? this.item.chain.split(" -> ") : [];
    events.forEach((raw, i) => {
      const text = raw.replace(/^\[/, "").replace(/\]$/, "");
      const card = document.createElement("li");
      card.className = "event-card";
      card.textContent = text;
      list.appendChild(card);
      if (i + 1 < events.length) {
        const arrow = document.createElement("li");
        arrow.className = "arrow";
        arrow.textContent = "↓";
        list.appendChild(arrow);
      }
    });
  }

  private renderEditor(): void {
    const holder = $("edit-cards");
    holder.innerHTML = "";
    this.buffer.events.forEach((text, i) => {
      const row = document.createElement("div");
      row.className = "edit-row";

      const box = document.createElement("textarea");
      box.value = text;
      box.rows = 2;
      box.oninput = () => {
        this.buffer.update(i, box.value);
        this.renderEditGate();
      };
      row.appendChild(box);

      const controls = document.createElement("div");
      controls.className = "edit-controls";
      const mk = (label: string, title: string, fn: () => void) => {
        const b = document.createElement("button");
        b.textContent = label;
        b.title = title;
        b.onclick = () => {
          fn();
          this.renderEditor();
        };
        controls.appendChild(b);
      };
      mk("↑", "move up", () => this.buffer.move(i, -1));
      mk("↓", "move down", () => this.buffer.move(i, 1));
      mk("+", "add event below", () => this.buffer.addAfter(i));
      mk("✕", "remove event", () => this.buffer.remove(i));
      row.appendChild(controls);
      holder.appendChild(row);
    });
    this.renderEditGate();
  }

  private renderEditGate(): void {
    const counter = $("edit-counter");
    counter.textContent = this.buffer.counterLabel();
    counter.classList.toggle("over", this.buffer.overCeiling());

    const problems = this.buffer.violations();
    const list = $("edit-violations");
    list.innerHTML = "";
    for (const violation of problems) {
      const li = document.createElement("li");
      li.textContent = `${violation.ruleId}: ${violation.detail}`;
      list.appendChild(li);
    }
    ($("edit-save") as HTMLButtonElement).disabled = problems.length > 0;
  }

  private renderRejectGate(): void {
    const reason = ($("reject-reason") as HTMLTextAreaElement).value.trim();
    ($("reject-confirm") as HTMLButtonElement).disabled = reason.length === 0;
  }

  private toast(message: string): void {
    const holder = $("toasts");
    const node = document.createElement("div");
    node.className = "toast";
    node.textContent = message;
    holder.appendChild(node);
    window.setTimeout(() => node.remove(), 4000);
  }
}

window.addEventListener("DOMContentLoaded", () => {
  new ReviewApp();
});
