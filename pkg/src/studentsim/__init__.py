"""Virtual student simulation through slide lectures with layered memory and cognitive-prior prompting."""

__version__ = "0.1.0"
