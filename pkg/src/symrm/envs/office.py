"""Office World navigation, discrete grid and continuous plane."""
from __future__ import annotations

import numpy as np

from .. import logic

UP, DOWN, LEFT, RIGHT = range(4)
ACTION_NAMES = ("up", "down", "left", "right")
_MOVES = {UP: (0, 1), DOWN: (0, -1), LEFT: (-1, 0), RIGHT: (1, 0)}


class OfficeWorld:
    """Grid of ``width`` x ``height`` cells with blocked wall cells.

    Discrete states are integer cells ``(x, y)``.  The continuous version
    lives on ``[0, width) x [0, height)`` and starts at the centre of the
    start cell; a move that would leave the domain or end inside a wall cell
    leaves the agent where it is.
    """

    variables = ("x", "y")
    n_actions = 4

    def __init__(self, width=15, height=11, start=(1, 1), walls=(), continuous=False,
                 step_length=1.0, noise=0.0, seed=None):
        self.width = int(width)
        self.height = int(height)
        self.walls = frozenset(tuple(w) for w in walls)
        self.continuous = bool(continuous)
        self.step_length = float(step_length)
        self.noise = float(noise)
        if tuple(start) in self.walls:
            raise ValueError("start cell is a wall")
        if self.continuous:
            self.start = (start[0] + 0.5, start[1] + 0.5)
        else:
            self.start = (int(start[0]), int(start[1]))
        self.rng = np.random.default_rng(seed)
        self.state = self.start

    @property
    def domain(self):
        return logic.box({"x": (0.0, float(self.width)), "y": (0.0, float(self.height))})

    def seed(self, seed):
        self.rng = np.random.default_rng(seed)

    def reset(self):
        self.state = self.start
        return self.state

    def blocked(self, x, y) -> bool:
        if self.continuous:
            if not (0.0 <= x < self.width and 0.0 <= y < self.height):
                return True
            return (int(np.floor(x)), int(np.floor(y))) in self.walls
        if not (0 <= x < self.width and 0 <= y < self.height):
            return True
        return (x, y) in self.walls

    def step(self, action):
        dx, dy = _MOVES[int(action)]
        x, y = self.state
        if self.continuous:
            nx = x + dx * self.step_length
            ny = y + dy * self.step_length
            if self.noise:
                nx += self.rng.uniform(-self.noise, self.noise)
                ny += self.rng.uniform(-self.noise, self.noise)
        else:
            nx, ny = x + dx, y + dy
        if not self.blocked(nx, ny):
            self.state = (nx, ny)
        return self.state, 0.0, False

    def cells(self):
        """All free discrete cells."""
        return [(x, y) for x in range(self.width) for y in range(self.height)
                if (x, y) not in self.walls]

    def region_formula(self, cell) -> logic.Formula:
        x, y = cell
        return logic.box({"x": (float(x), float(x + 1)), "y": (float(y), float(y + 1))})
