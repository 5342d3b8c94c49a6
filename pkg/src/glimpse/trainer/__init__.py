from .objective import (
    Terms,
    Trajectory,
    batch_log_prob,
    j_hat,
    j_hat_terms,
    j_hat_trajectories,
    replay,
    reward,
    rollout,
    traj_log_prob,
    trajectory_terms,
)
from .oracle import OracleResult, enumerate_grad_check, enumerate_trajectories, expected_reward_grad
from .rollout import Mode, RolloutBatch, collect, parse_mode
from .adam import OptimizerState, adam_step
from .train import (
    EpochMetrics,
    TrainConfig,
    TrainResult,
    load_training_checkpoint,
    save_training_checkpoint,
    train,
    train_minibatch,
)
