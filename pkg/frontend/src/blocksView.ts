import type { BlocksBoard, BlocksState } from "./types";

export type CellContent = "red" | "blue" | "empty";

export interface BlocksViewModel {
  kind: "blocks";
  done: boolean;
  turnLabel: string;           // runs 1..6
  awaiting: string;
  goal: CellContent[] | null;  // null for the P2 seat: rendered fully grey
  working: CellContent[];
  palette: PaletteButton[];
  scores: number[];
  meanScore: number | null;
}

export interface PaletteButton {
  action: number;
  label: string;
  enabled: boolean;
}

const PALETTE_LABELS = ["cell 1", "cell 2", "cell 3", "cell 4", "remove", "pass"];

function gridOf(red: number | null, blue: number | null): CellContent[] {
  const cells: CellContent[] = ["empty", "empty", "empty", "empty"];
  if (red !== null && red >= 0 && red < 4) cells[red] = "red";
  if (blue !== null && blue >= 0 && blue < 4) cells[blue] = "blue";
  return cells;
}

export function buildBlocksViewModel(state: BlocksState): BlocksViewModel {
  if (state.done || !state.board) {
    const summary = state.summary;
    return {
      kind: "blocks",
      done: true,
      turnLabel: "",
      awaiting: "",
      goal: null,
      working: gridOf(null, null),
      palette: [],
      scores: state.scores,
      meanScore: summary ? summary.mean_score : null,
    };
  }
  const board: BlocksBoard = state.board;
  // Render only what the seat-scoped view carries: the goal grid exists in
  // the payload solely for the P1 seat.
  const goal = board.goal_visible && board.goal
    ? gridOf(board.goal.red, board.goal.blue)
    : null;
  const legal = new Set(state.legal_actions ?? []);
  const humanTurn = state.awaiting === "human_action";
  const palette = PALETTE_LABELS.map((label, action) => ({
    action,
    label,
    enabled: humanTurn && legal.has(action),
  }));
  return {
    kind: "blocks",
    done: false,
    turnLabel: `Turn ${(board.turn ?? 0) + 1} of 6`,
    awaiting: humanTurn ? "your move" : "partner is moving",
    goal,
    working: gridOf(board.working.red, board.working.blue),
    palette,
    scores: state.scores,
    meanScore: null,
  };
}

function gridHtml(cells: CellContent[] | null, cls: string): string {
  const content = cells
    ? cells.map((c, i) => `<div class="cell ${c}" data-cell="${i}"></div>`).join("")
    : [0, 1, 2, 3].map((i) => `<div class="cell grey" data-cell="${i}"></div>`).join("");
  return `<div class="grid ${cls}">${content}</div>`;
}

export function renderBlocks(vm: BlocksViewModel): string {
  if (vm.done) {
    const scores = vm.scores.map((s) => `<li>${s}</li>`).join("");
    return [
      `<section class="blocks complete">`,
      `<h2>Games finished</h2>`,
      `<ol class="scores">${scores}</ol>`,
      vm.meanScore !== null ? `<p>Mean score: ${vm.meanScore}</p>` : "",
      `</section>`,
    ].join("");
  }
  const buttons = vm.palette
    .map((b) =>
      `<button class="palette" data-action="${b.action}"${b.enabled ? "" : " disabled"}>` +
      `${b.label}</button>`)
    .join("");
  return [
    `<section class="blocks">`,
    `<h2>${vm.turnLabel} &middot; ${vm.awaiting}</h2>`,
    `<div class="boards">`,
    `<figure><figcaption>Goal</figcaption>${gridHtml(vm.goal, "goal")}</figure>`,
    `<figure><figcaption>Working grid</figcaption>${gridHtml(vm.working, "working")}</figure>`,
    `</div>`,
    `<div class="actions">${buttons}</div>`,
    vm.scores.length ? `<p>Scores so far: ${vm.scores.join(", ")}</p>` : "",
    `</section>`,
  ].join("");
}
