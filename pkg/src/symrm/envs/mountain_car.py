"""Mountain Car with the valley centred at position 0 and a peak on each side.

Physics follow the classic-control update law; in the shifted coordinate
``p = x + pi/6`` the gravity term ``cos(3x)`` becomes ``sin(3p)``.  Every
agent action is held for ``action_repeat`` physics ticks.
"""
from __future__ import annotations

import math

import numpy as np

from .. import logic

PUSH_LEFT, NOOP, PUSH_RIGHT = range(3)


class MountainCarRML:
    variables = ("position", "velocity")
    n_actions = 3

    def __init__(self, min_position=-0.9, max_position=0.9, max_speed=0.07, force=0.001,
                 gravity=0.0025, action_repeat=4, start_low=-0.1, start_high=0.1, seed=None):
        self.min_position = float(min_position)
        self.max_position = float(max_position)
        self.max_speed = float(max_speed)
        self.force = float(force)
        self.gravity = float(gravity)
        self.action_repeat = int(action_repeat)
        self.start_low = float(start_low)
        self.start_high = float(start_high)
        self.rng = np.random.default_rng(seed)
        self.ticks = 0
        self.state = (0.0, 0.0)

    @property
    def domain(self):
        return logic.conj(
            logic.Cmp(">=", logic.Var("position"), logic.Num(self.min_position)),
            logic.Cmp("<=", logic.Var("position"), logic.Num(self.max_position)),
            logic.Cmp(">=", logic.Var("velocity"), logic.Num(-self.max_speed)),
            logic.Cmp("<=", logic.Var("velocity"), logic.Num(self.max_speed)),
        )

    def seed(self, seed):
        self.rng = np.random.default_rng(seed)

    def reset(self):
        self.ticks = 0
        self.state = (float(self.rng.uniform(self.start_low, self.start_high)), 0.0)
        return self.state

    def tick(self, action):
        p, v = self.state
        v += (int(action) - 1) * self.force - self.gravity * math.sin(3.0 * p)
        v = min(max(v, -self.max_speed), self.max_speed)
        p += v
        if p <= self.min_position:
            p = self.min_position
            v = max(v, 0.0)
        elif p >= self.max_position:
            p = self.max_position
            v = min(v, 0.0)
        self.state = (p, v)
        self.ticks += 1

    def step(self, action):
        for _ in range(self.action_repeat):
            self.tick(action)
        return self.state, -1.0, False
