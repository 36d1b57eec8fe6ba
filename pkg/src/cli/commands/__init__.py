from . import checkpoints, data, evaluate, prompts, training

COMMAND_GROUPS = [prompts, data, training, evaluate, checkpoints]

__all__ = ['COMMAND_GROUPS']
