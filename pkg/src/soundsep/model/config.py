from dataclasses import dataclass, asdict


@dataclass(frozen=True)
class ModelConfig:
    """Network hyperparameters.

    rnn_hidden sizes the class decoder's bidirectional recurrent layer; None
    means 3 * embed_dim, which puts the default build in the expected
    parameter range.
    """

    num_mics: int = 4          # M
    max_sources: int = 4       # S, tracks always emitted
    embed_dim: int = 64        # D
    num_blocks: int = 6        # N_b repetitions, each one F-stage + one T-stage
    unfold_kernel: int = 3     # G
    num_heads: int = 4
    ssm_state: int = 16
    ssm_expand: int = 2
    num_classes: int = 13      # foreground classes; silence id == num_classes

    rnn_hidden: int | None = None

    def __post_init__(self):
        if self.embed_dim % self.num_heads:
            raise ValueError("embed_dim must be divisible by num_heads")
        if self.unfold_kernel % 2 == 0:
            raise ValueError("unfold_kernel must be odd")
        for name in ("num_mics", "max_sources", "embed_dim", "num_blocks",
                     "unfold_kernel", "num_heads", "ssm_state", "ssm_expand", "num_classes"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def num_classes_total(self) -> int:
        return self.num_classes + 1

    @property
    def silence_id(self) -> int:
        return self.num_classes

    @property
    def rnn_width(self) -> int:
        return self.rnn_hidden if self.rnn_hidden is not None else 3 * self.embed_dim

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)
