// Client-side mirror of the server's chain validation. Rule ids match the
// server contract exactly, so anything flagged here would also be a 400 —
// the UI never submits a chain the service rejects for grammar or length.

export const MIN_EVENTS = 2;
export const MAX_EVENTS = 10;
export const MAX_EVENT_CHARS = 300;

export interface RuleViolation {
  ruleId: string;
  detail: string;
}

const FORBIDDEN_GLYPHS = ["[", "]", "\n", "\r", "->", "→"];

export function eventViolations(events: string[]): RuleViolation[] {
  const out: RuleViolation[] = [];
  const trimmed = events.map((e) => e.trim());

  trimmed.forEach((ev, i) => {
    if (ev.length === 0) {
      out.push({ ruleId: "structure.parse", detail: `event ${i + 1} is empty` });
      return;
    }
    for (const glyph of FORBIDDEN_GLYPHS) {
      if (ev.includes(glyph)) {
        out.push({
          ruleId: "structure.parse",
          detail: `event ${i + 1} contains "${glyph === "\n" || glyph === "\r" ? "newline" : glyph}"`,
        });
        return;
      }
    }
  });

  if (trimmed.length < MIN_EVENTS) {
    out.push({
      ruleId: "length.min",
      detail: `${trimmed.length} events, minimum is ${MIN_EVENTS}`,
    });
  }
  if (trimmed.length > MAX_EVENTS) {
    out.push({
      ruleId: "length.max",
      detail: `${trimmed.length} events, maximum is ${MAX_EVENTS}`,
    });
  }

  trimmed.forEach((ev, i) => {
    if (ev.length === 0) return;
    if (ev.length > MAX_EVENT_CHARS) {
      out.push({
        ruleId: "event.max_chars",
        detail: `event ${i + 1} is ${ev.length} chars, maximum is ${MAX_EVENT_CHARS}`,
      });
    }
    if (ev.split(/\s+/).filter(Boolean).length < 2) {
      out.push({
        ruleId: "completeness.fragment",
        detail: `event ${i + 1} has fewer than two words`,
      });
    }
  });

  for (let i = 0; i + 1 < trimmed.length; i++) {
    if (trimmed[i].length > 0 && trimmed[i] === trimmed[i + 1]) {
      out.push({
        ruleId: "completeness.adjacent_duplicate",
        detail: `events ${i + 1} and ${i + 2} are identical`,
      });
    }
  }
  return out;
}

export function serializeChain(events: string[]): string {
  return events.map((e) => `[${e.trim()}]`).join(" -> ");
}

// Parses the canonical bracketed-arrow form (both arrow glyphs tolerated).
// Returns null when the text does not match the grammar.
export function parseChain(text: string): string[] | null {
  let rest = text.trim();
  if (rest.length === 0) return null;
  const events: string[] = [];
  for (;;) {
    if (!rest.startsWith("[")) return null;
    const close = rest.indexOf("]");
    if (close < 0) return null;
    const body = rest.slice(1, close);
    if (/[\[\n\r]/.test(body) || body.includes("->") || body.includes("→")) {
      return null;
    }
    const event = body.trim();
    if (event.length === 0) return null;
    events.push(event);
    rest = rest.slice(close + 1).trimStart();
    if (rest.length === 0) return events;
    const sep = rest.match(/^(->|→)/);
    if (!sep) return null;
    rest = rest.slice(sep[0].length).trimStart();
  }
}
