"""Two-stage contrastive audio/text hate-speech classification at desk scale."""

__version__ = "0.1.0"
