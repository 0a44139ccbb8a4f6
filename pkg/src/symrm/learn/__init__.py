from .common import (Checkpoint, EpisodeRecord, Hyperparameters, PlainModel, RmModel, SrmModel,
                     TrainingFault, TrainResult, epsilon_greedy)
from .tabular import (QTable, TabularAgent, TabularPolicy, q_learning, qrm, qsrm, tables_equal,
                      train_tabular)
