// Client-side selection state. Every screen keeps its invariants here so
// the submit button simply mirrors canSubmit() and invalid judgments are
// unsubmittable by construction.

import type { JudgmentBody, PairChoiceValue } from "./types.js";

// ── best-worst ──────────────────────────────────────

export class BwsSelectionState {
  readonly candidateIds: string[];
  private best = new Set<string>();
  private worst = new Set<string>();

  constructor(candidateIds: string[]) {
    this.candidateIds = [...candidateIds];
  }

  /** Toggle membership on one side; picking a candidate on one side
   *  removes it from the other, and a full side rejects further picks. */
  toggle(side: "best" | "worst", candidateId: string): boolean {
    if (!this.candidateIds.includes(candidateId)) return false;
    const target = side === "best" ? this.best : this.worst;
    const other = side === "best" ? this.worst : this.best;
    if (target.has(candidateId)) {
      target.delete(candidateId);
      return true;
    }
    if (target.size >= 2) return false;
    other.delete(candidateId);
    target.add(candidateId);
    return true;
  }

  marks(candidateId: string): "best" | "worst" | null {
    if (this.best.has(candidateId)) return "best";
    if (this.worst.has(candidateId)) return "worst";
    return null;
  }

  canSubmit(): boolean {
    if (this.best.size !== 2 || this.worst.size !== 2) return false;
    for (const id of this.best) if (this.worst.has(id)) return false;
    return true;
  }

  payload(instanceId: string, annotatorId: string): JudgmentBody {
    if (!this.canSubmit()) {
      throw new Error("selection incomplete: pick exactly 2 best and 2 worst");
    }
    return {
      kind: "BestWorst",
      instance_id: instanceId,
      annotator_id: annotatorId,
      best: [...this.best].sort(),
      worst: [...this.worst].sort(),
    };
  }

  reset(): void {
    this.best.clear();
    this.worst.clear();
  }
}

// ── ranking with ties ───────────────────────────────

/** Competition ranks from arbitrary per-candidate scores (smaller =
 *  better): ties share a rank and the next distinct rank skips ahead,
 *  e.g. scores (2, 2, 5) become ranks (1, 1, 3). */
export function compressRanks(values: number[]): number[] {
  return values.map((v) => 1 + values.filter((w) => w < v).length);
}

export class RankingSelectionState {
  readonly candidateIds: string[];
  readonly criteria: string[];
  private raw = new Map<string, Map<string, number>>(); // criterion -> candidate -> slot

  constructor(candidateIds: string[], criteria: string[]) {
    this.candidateIds = [...candidateIds];
    this.criteria = [...criteria];
    for (const c of criteria) this.raw.set(c, new Map());
  }

  setRank(criterion: string, candidateId: string, slot: number): boolean {
    const ranks = this.raw.get(criterion);
    if (!ranks || !this.candidateIds.includes(candidateId)) return false;
    if (!Number.isFinite(slot) || slot < 1) return false;
    ranks.set(candidateId, slot);
    return true;
  }

  isComplete(criterion: string): boolean {
    const ranks = this.raw.get(criterion);
    return !!ranks && this.candidateIds.every((id) => ranks.has(id));
  }

  canSubmit(): boolean {
    return this.criteria.every((c) => this.isComplete(c));
  }

  /** One judgment per criterion, tie-compressed before sending; both
   *  criteria go out together. */
  payloads(instanceId: string, annotatorId: string): JudgmentBody[] {
    if (!this.canSubmit()) throw new Error("ranking incomplete");
    return this.criteria.map((criterion) => {
      const ranks = this.raw.get(criterion)!;
      const slots = this.candidateIds.map((id) => ranks.get(id)!);
      const compressed = compressRanks(slots);
      const rank_of: Record<string, number> = {};
      this.candidateIds.forEach((id, i) => {
        rank_of[id] = compressed[i]!;
      });
      return {
        kind: "Ranking",
        instance_id: instanceId,
        annotator_id: annotatorId,
        rank_of,
        criterion,
      };
    });
  }
}

// ── pairwise ────────────────────────────────────────

export class PairwiseSelectionState {
  private choice: PairChoiceValue | null = null;

  choose(choice: PairChoiceValue): void {
    this.choice = choice;
  }

  canSubmit(): boolean {
    return this.choice !== null;
  }

  payload(instanceId: string, annotatorId: string): JudgmentBody {
    if (this.choice === null) throw new Error("no choice made");
    return {
      kind: "Pairwise",
      instance_id: instanceId,
      annotator_id: annotatorId,
      choice: this.choice,
    };
  }
}
