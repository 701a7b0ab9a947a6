/** Wire types mirroring the play service's JSON views (schema version 1). */

export interface TryResult {
  phase: "train" | "test";
  context: number;
  context_name: string;
  try_index: number;
  action_human: number;
  action_agent: number;
  score: number;
}

export interface BanditState {
  schema_version: number;
  session_id: string;
  env: "bandit";
  protocol: "study" | "free";
  done: boolean;
  history: TryResult[];
  phase?: "train" | "test";
  try_index?: number;
  context?: number;
  context_name?: string;
  arms?: number;
  tries_total?: number;
  tries_done?: number;
  legal_actions?: number[];
  awaiting?: string;
  summary?: BanditSummary;
}

export interface BanditSummary {
  tries: number;
  total_score: number;
  first_try_scores: Record<string, number>;
}

export interface BlocksBoard {
  working: { red: number | null; blue: number | null };
  turn: number;
  acting_player: number | null;
  done: boolean;
  goal_visible: boolean;
  goal?: { red: number; blue: number };
}

export interface BlocksState {
  schema_version: number;
  session_id: string;
  env: "blocks";
  protocol: "free";
  done: boolean;
  human_seat: number;
  episode: number;
  episodes_total: number;
  scores: number[];
  board?: BlocksBoard;
  legal_actions?: number[];
  awaiting?: string;
  turn?: number;
  summary?: { episodes: number; scores: number[]; mean_score: number };
}

export type SessionState = BanditState | BlocksState;

export interface CreateSessionRequest {
  env: "bandit" | "blocks";
  protocol?: "study" | "free";
  checkpoint?: string;
  partner_module?: number;
  scripted_partner?: string;
  human_seat?: number;
  seed?: number;
  episodes?: number;
  tweaked?: boolean;
}

export interface ActionOutcome<S extends SessionState> {
  result: unknown;
  state: S;
}
