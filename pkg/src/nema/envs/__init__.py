"""Tasks the policies are trained on: the viscous swimmer, MNIST, and a quadratic oracle."""

from .mnist import IdxFormatError, MnistDataset, accuracy, mnist_dump, mnist_load, mnist_load_dir, mnist_load_files
from .swimmer import EpisodeDone, SwimmerConfig, SwimmerEnv, SwimmerState
from .tasks import FAILURE, MnistTask, QuadraticTask, SwimmerTask, Task, mnist_fitness, quadratic_task

__all__ = [
    "EpisodeDone",
    "FAILURE",
    "IdxFormatError",
    "MnistDataset",
    "MnistTask",
    "QuadraticTask",
    "SwimmerConfig",
    "SwimmerEnv",
    "SwimmerState",
    "SwimmerTask",
    "Task",
    "accuracy",
    "mnist_dump",
    "mnist_fitness",
    "mnist_load",
    "mnist_load_dir",
    "mnist_load_files",
    "quadratic_task",
]
