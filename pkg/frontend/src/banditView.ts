import type { BanditState, TryResult } from "./types";

export interface ArmCell {
  arm: number;        // 0-based action index
  label: string;      // 1-based for display
  selectable: boolean;
}

export interface BanditViewModel {
  kind: "bandit";
  done: boolean;
  phaseLabel: string;
  contextLabel: string;
  tryLabel: string;
  progress: { done: number; total: number };
  arms: ArmCell[];
  reveals: RevealRow[];
  phaseSwitched: boolean;    // true on the first try of the test task
  summary: SummaryRow[] | null;
  totalScore: number | null;
}

export interface RevealRow {
  label: string;
  human: string;
  agent: string;
  score: number;
  matched: boolean;
}

export interface SummaryRow {
  context: string;
  firstTryScore: number;
}

const arm = (i: number) => `a${i + 1}`;

export function buildBanditViewModel(state: BanditState): BanditViewModel {
  const reveals = state.history.map(revealRow);
  if (state.done) {
    const summary = state.summary ?? { tries: 0, total_score: 0, first_try_scores: {} };
    return {
      kind: "bandit",
      done: true,
      phaseLabel: "complete",
      contextLabel: "",
      tryLabel: "",
      progress: { done: summary.tries, total: summary.tries },
      arms: [],
      reveals,
      phaseSwitched: false,
      summary: Object.entries(summary.first_try_scores).map(([context, firstTryScore]) => ({
        context,
        firstTryScore,
      })),
      totalScore: summary.total_score,
    };
  }
  const legal = new Set(state.legal_actions ?? []);
  const arms: ArmCell[] = [];
  for (let i = 0; i < (state.arms ?? 0); i++) {
    arms.push({ arm: i, label: arm(i), selectable: legal.has(i) });
  }
  const phaseSwitched = state.phase === "test" && state.try_index === 1 &&
    state.history.length > 0 && state.history[state.history.length - 1]?.phase === "train";
  return {
    kind: "bandit",
    done: false,
    phaseLabel: state.phase === "test" ? "Test task" : "Train task",
    contextLabel: `Context ${state.context_name ?? ""}`,
    tryLabel: `Try ${state.try_index} of 5`,
    progress: { done: state.tries_done ?? 0, total: state.tries_total ?? 0 },
    arms,
    reveals,
    phaseSwitched,
    summary: null,
    totalScore: null,
  };
}

function revealRow(entry: TryResult): RevealRow {
  return {
    label: `${entry.phase}-${entry.context_name} try ${entry.try_index}`,
    human: arm(entry.action_human),
    agent: arm(entry.action_agent),
    score: entry.score,
    matched: entry.action_human === entry.action_agent,
  };
}

/** Client-side guard: one submission per pending try. */
export class SubmitGuard {
  private pending = false;

  tryAcquire(): boolean {
    if (this.pending) return false;
    this.pending = true;
    return true;
  }

  release(): void {
    this.pending = false;
  }

  get locked(): boolean {
    return this.pending;
  }
}

export function renderBandit(vm: BanditViewModel): string {
  if (vm.done) {
    const rows = (vm.summary ?? [])
      .map((row) => `<tr><td>${row.context}</td><td>${row.firstTryScore}</td></tr>`)
      .join("");
    return [
      `<section class="bandit complete">`,
      `<h2>Session complete</h2>`,
      `<p>Total score: ${vm.totalScore}</p>`,
      `<h3>First-try score per context</h3>`,
      `<table><thead><tr><th>Context</th><th>1st try</th></tr></thead>`,
      `<tbody>${rows}</tbody></table>`,
      `</section>`,
    ].join("");
  }
  const cells = vm.arms
    .map((cell) =>
      `<button class="arm" data-arm="${cell.arm}"${cell.selectable ? "" : " disabled"}>` +
      `${cell.label}</button>`)
    .join("");
  const reveals = vm.reveals
    .slice(-6)
    .map((row) =>
      `<li class="${row.matched ? "matched" : "missed"}">${row.label}: ` +
      `you ${row.human}, partner ${row.agent} &rarr; ${row.score}</li>`)
    .join("");
  const banner = vm.phaseSwitched
    ? `<p class="banner">New task! Same partner, new prizes.</p>` : "";
  return [
    `<section class="bandit">`,
    banner,
    `<h2>${vm.phaseLabel} &middot; ${vm.contextLabel} &middot; ${vm.tryLabel}</h2>`,
    `<p class="progress">${vm.progress.done}/${vm.progress.total} tries</p>`,
    `<div class="arms">${cells}</div>`,
    `<ol class="reveals">${reveals}</ol>`,
    `</section>`,
  ].join("");
}
