"""Hanabi-lite: 2 players, one color, ranks 1-5, hand size 2, 3 info and 3
life tokens, deck of 10 (three 1s, two each of 2-4, one 5). Max score 5.

Rewards are dense (+1 per successful play) with a terminal correction on
life-token exhaustion so the episode return always equals the final score
(0 on a bomb-out).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import EnvSpec, StepOutcome, TwoPlayerEnv

RANKS = (1, 2, 3, 4, 5)
RANK_COUNTS = {1: 3, 2: 2, 3: 2, 4: 2, 5: 1}
DECK_SIZE = 10
HAND_SIZE = 2
MAX_INFO = 3
MAX_LIVES = 3
N_ACTIONS = 10   # play 0/1, discard 0/1, hint color, hint rank 1..5
OBS_DIM = 62
# Bounded by token accounting: at most 6 plays+discards empty the deck, at
# most 4+discards hints can ever be afforded, plus the 2 final-round turns.
HORIZON = 20

ACT_PLAY0, ACT_PLAY1, ACT_DISCARD0, ACT_DISCARD1, ACT_HINT_COLOR = range(5)
ACT_HINT_RANK = 5  # + (rank - 1)


@dataclass
class Card:
    rank: int
    rank_hinted: int | None = None
    color_hinted: bool = False


def full_deck() -> list[int]:
    return [r for r in RANKS for _ in range(RANK_COUNTS[r])]


@dataclass
class HanabiConfig:
    colors: int = 1
    ranks: int = 5
    players: int = 2
    hand_size: int = HAND_SIZE
    info_tokens: int = MAX_INFO
    life_tokens: int = MAX_LIVES


class HanabiEnv(TwoPlayerEnv):
    def __init__(self, config: HanabiConfig | None = None):
        self.config = config or HanabiConfig()
        self.spec = EnvSpec("hanabi", (N_ACTIONS, N_ACTIONS), (OBS_DIM, OBS_DIM),
                            horizon=HORIZON, simultaneous=False)
        self._done = True

    def reset(self, seed: int) -> tuple[np.ndarray, np.ndarray]:
        rng = np.random.default_rng(seed)
        deck = full_deck()
        order = rng.permutation(DECK_SIZE)
        self.deck = [deck[i] for i in order]
        self.hands: list[list[Card]] = [[], []]
        for p in (0, 1):
            for _ in range(HAND_SIZE):
                self.hands[p].append(Card(self.deck.pop()))
        self.fireworks = 0
        self.info = MAX_INFO
        self.lives = MAX_LIVES
        self.discards: list[int] = []
        self.turn_owner = 0
        self.last_action: int | None = None
        self.final_countdown: int | None = None
        self._return = 0.0
        self._done = False
        return self.observations()

    @property
    def current_player(self) -> int | None:
        return self.turn_owner

    @property
    def done(self) -> bool:
        return self._done

    @property
    def score(self) -> int:
        return 0 if self.lives == 0 else self.fireworks

    def legal_masks(self) -> tuple[np.ndarray, np.ndarray]:
        return self._mask_for(0), self._mask_for(1)

    def _mask_for(self, player: int) -> np.ndarray:
        mask = np.zeros(N_ACTIONS, dtype=bool)
        hand = self.hands[player]
        other = self.hands[1 - player]
        for slot in range(min(len(hand), HAND_SIZE)):
            mask[ACT_PLAY0 + slot] = True
            if self.info < MAX_INFO:
                mask[ACT_DISCARD0 + slot] = True
        if self.info > 0 and other:
            mask[ACT_HINT_COLOR] = True
            for card in other:
                mask[ACT_HINT_RANK + card.rank - 1] = True
        return mask

    def step(self, action: int) -> StepOutcome:
        self._require_live()
        player = self.turn_owner
        self._require_legal(player, action)
        hand = self.hands[player]
        reward = 0.0
        if action in (ACT_PLAY0, ACT_PLAY1):
            card = hand.pop(action - ACT_PLAY0)
            if card.rank == self.fireworks + 1:
                self.fireworks += 1
                reward += 1.0
                if card.rank == len(RANKS):
                    self.info = min(self.info + 1, MAX_INFO)
            else:
                self.lives -= 1
                self.discards.append(card.rank)
            self._draw(player)
        elif action in (ACT_DISCARD0, ACT_DISCARD1):
            card = hand.pop(action - ACT_DISCARD0)
            self.discards.append(card.rank)
            self.info += 1
            self._draw(player)
        elif action == ACT_HINT_COLOR:
            self.info -= 1
            for card in self.hands[1 - player]:
                card.color_hinted = True
        else:
            rank = action - ACT_HINT_RANK + 1
            self.info -= 1
            for card in self.hands[1 - player]:
                if card.rank == rank:
                    card.rank_hinted = rank
        self.last_action = action
        self.turn_owner = 1 - player

        if self.lives == 0:
            # Bomb-out wipes the score; the correction makes the return 0.
            reward = -self._return
            self._done = True
        elif self.fireworks == len(RANKS):
            self._done = True
        else:
            if self.final_countdown is not None:
                self.final_countdown -= 1
                if self.final_countdown == 0:
                    self._done = True
            if not self.deck and self.final_countdown is None:
                self.final_countdown = 2
        self._return += reward
        return StepOutcome(self.observations(), reward, self._done, self.legal_masks())

    def _draw(self, player: int) -> None:
        if self.deck:
            self.hands[player].append(Card(self.deck.pop()))

    def observations(self) -> tuple[np.ndarray, np.ndarray]:
        return self._encode(0), self._encode(1)

    def _encode(self, viewer: int) -> np.ndarray:
        parts = []
        own = self.hands[viewer]
        for slot in range(HAND_SIZE):
            block = np.zeros(7)
            if slot < len(own):
                card = own[slot]
                if card.rank_hinted is not None:
                    block[card.rank_hinted - 1] = 1.0
                else:
                    block[5] = 1.0
                block[6] = 1.0 if card.color_hinted else 0.0
            parts.append(block)
        other = self.hands[1 - viewer]
        for slot in range(HAND_SIZE):
            block = np.zeros(6)
            if slot < len(other):
                block[other[slot].rank - 1] = 1.0
            else:
                block[5] = 1.0
            parts.append(block)
        parts.append(_onehot(self.fireworks, 6))
        parts.append(_onehot(self.info, 4))
        parts.append(_onehot(self.lives, 4))
        parts.append(_onehot(len(self.deck), 11))
        last = np.zeros(11)
        if self.last_action is None:
            last[10] = 1.0
        else:
            last[self.last_action] = 1.0
        parts.append(last)
        return np.concatenate(parts)

    def card_multiset(self) -> list[int]:
        """All cards accounted for: deck + hands + discards + played."""
        played = list(range(1, self.fireworks + 1))
        held = [c.rank for hand in self.hands for c in hand]
        return sorted(self.deck + held + self.discards + played)

    def render_json(self) -> dict:
        return {
            "fireworks": self.fireworks, "info": self.info, "lives": self.lives,
            "deck": len(self.deck), "discards": sorted(self.discards),
            "hands": [[c.rank for c in h] for h in self.hands],
            "turn_owner": self.turn_owner, "done": self._done, "score": self.score,
        }


def _onehot(i: int, n: int) -> np.ndarray:
    v = np.zeros(n)
    v[i] = 1.0
    return v
