/**
 * UI state machine: idle -> sketching -> synthesizing -> viewing -> editing.
 *
 * The one guarded transition: leaving `sketching` while strokes are unsent
 * requires an explicit confirmation, so a slip of the mouse cannot discard
 * drawn input.
 */

export type UiState = "idle" | "sketching" | "synthesizing" | "viewing" | "editing";

const ALLOWED: Record<UiState, UiState[]> = {
  idle: ["sketching"],
  sketching: ["synthesizing", "idle", "sketching"],
  synthesizing: ["viewing", "sketching"],
  viewing: ["editing", "sketching", "viewing"],
  editing: ["viewing", "sketching"],
};

export class StateMachine {
  state: UiState = "idle";
  unsentStrokes = 0;

  canTransition(to: UiState): boolean {
    return ALLOWED[this.state].includes(to);
  }

  /**
   * Attempt a transition. Returns "ok" when applied, "confirm" when the
   * move would drop unsent strokes and needs confirmation, "blocked" when
   * the transition is not allowed at all.
   */
  transition(to: UiState, opts: { confirmed?: boolean } = {}): "ok" | "confirm" | "blocked" {
    if (!this.canTransition(to)) return "blocked";
    const dropsStrokes =
      this.state === "sketching" && to !== "synthesizing" && this.unsentStrokes > 0;
    if (dropsStrokes && !opts.confirmed) return "confirm";
    if (to === "synthesizing" || (dropsStrokes && opts.confirmed)) {
      this.unsentStrokes = 0;
    }
    this.state = to;
    return "ok";
  }

  strokeAdded(): void {
    if (this.state === "sketching") this.unsentStrokes++;
  }
}
