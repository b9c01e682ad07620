from .commands import invoke


invoke()
