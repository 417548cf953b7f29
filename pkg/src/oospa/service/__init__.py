from .app import CHECKPOINT_ENV, create_app

__all__ = ["create_app", "CHECKPOINT_ENV"]
