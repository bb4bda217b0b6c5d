import {
  MAX_EVENTS,
  RuleViolation,
  eventViolations,
  parseChain,
  serializeChain,
} from "./chainRules.js";

// Ordered event-card model behind the edit view. Events are edited as plain
// text cards, so bracket/arrow grammar violations are impossible to type
// into the chain structure itself (and still checked, belt and braces).
export class EditBuffer {
  events: string[] = [];

  load(chainText: string): boolean {
    const parsed = parseChain(chainText);
    if (parsed === null) return false;
    this.events = parsed;
    return true;
  }

  update(index: number, text: string): void {
    if (index >= 0 && index < this.events.length) this.events[index] = text;
  }

  addAfter(index: number): void {
    this.events.splice(index + 1, 0, "");
  }

  remove(index: number): void {
    if (this.events.length > 1) this.events.splice(index, 1);
  }

  move(index: number, delta: -1 | 1): void {
    const target = index + delta;
    if (index < 0 || index >= this.events.length) return;
    if (target < 0 || target >= this.events.length) return;
    const [event] = this.events.splice(index, 1);
    this.events.splice(target, 0, event);
  }

  violations(): RuleViolation[] {
    return eventViolations(this.events);
  }

  canSubmit(): boolean {
    return this.violations().length === 0;
  }

  serialized(): string {
    return serializeChain(this.events);
  }

  counterLabel(): string {
    return `${this.events.length} / ${MAX_EVENTS} events`;
  }

  overCeiling(): boolean {
    return this.events.length > MAX_EVENTS;
  }
}
