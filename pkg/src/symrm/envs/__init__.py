from .mountain_car import MountainCarRML
from .office import OfficeWorld
from .tasks import (ENV_NAMES, TASK_IDS, Labeler, LabeledTask, RewardMachine, TaskError,
                    TaskWrapper, labeled_factory, load_config, make_env, make_labeled, make_task,
                    mirror_rm, region_formulas, task_factory, task_guard_set, task_spec, task_srm)


def office_discrete(seed=None, config=None) -> OfficeWorld:
    return make_env("office-discrete", seed, config)


def office_continuous(seed=None, config=None) -> OfficeWorld:
    return make_env("office-continuous", seed, config)


def mountain_car_rml(seed=None, config=None) -> MountainCarRML:
    return make_env("mountain-car", seed, config)
