"""Desk-scale teacher/student models with PEFT-only training.

Two model families mirror the two PEFT paths: the adapter family uses
tanh residual blocks with a bottleneck adapter after each block core;
the LoRA family uses a minimal single-head attention block (LoRA on the
query and value projections) followed by a tanh residual MLP. Base
weights are frozen; only PEFT parameters and the classification head
train, by plain SGD over analytic gradients.

Inputs are short token sequences (B, T, d_in); classification mean-pools
the final hidden states.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .container import TensorContainer
from .errors import LayerCountError, ShapeMismatchError, TooFewSamplesError
from .layermap import LayerMapPlan
from .peft import (
    ADAPTER,
    LORA,
    AdapterParams,
    LoraLayerParams,
    LoraParams,
    PeftModuleSet,
)
from .pipeline import SampleBatch

MATCHING = "matching"
INCOMPATIBLE = "incompatible"


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# Task


@dataclass(frozen=True)
class ToyTask:
    """Synthetic classification task from a fixed random ground-truth net.

    Same seed -> identical dataset; classes are exactly balanced in both
    splits.
    """

    train_x: np.ndarray  # (N, T, d_in)
    train_y: np.ndarray  # (N,) int64
    val_x: np.ndarray
    val_y: np.ndarray
    n_classes: int
    seed: int

    @property
    def d_in(self) -> int:
        return self.train_x.shape[2]

    @property
    def tokens(self) -> int:
        return self.train_x.shape[1]

    @classmethod
    def generate(
        cls,
        seed: int,
        d_in: int = 32,
        tokens: int = 4,
        n_classes: int = 4,
        n_train: int = 4096,
        n_val: int = 512,
    ) -> "ToyTask":
        rng = np.random.default_rng(np.random.PCG64(seed))
        hidden = 2 * d_in
        w1 = rng.normal(0.0, 1.0 / np.sqrt(d_in), (d_in, hidden))
        w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden), (hidden, n_classes))

        def label_of(x):  # x: (n, T, d_in)
            return np.argmax(np.tanh(x @ w1).mean(axis=1) @ w2, axis=-1)

        per_class_train = n_train // n_classes
        per_class_val = n_val // n_classes
        need = {c: per_class_train + per_class_val for c in range(n_classes)}
        buckets: dict[int, list[np.ndarray]] = {c: [] for c in range(n_classes)}
        while any(len(buckets[c]) < need[c] for c in range(n_classes)):
            xs = rng.normal(0.0, 1.0, (1024, tokens, d_in))
            ys = label_of(xs)
            for c in range(n_classes):
                short = need[c] - len(buckets[c])
                if short > 0:
                    hits = xs[ys == c][:short]
                    buckets[c].extend(hits)

        train_parts, val_parts = [], []
        for c in range(n_classes):
            train_parts.append((np.stack(buckets[c][:per_class_train]), c))
            val_parts.append((np.stack(buckets[c][per_class_train:need[c]]), c))

        def assemble(parts, per_class):
            x = np.concatenate([p for p, _ in parts])
            y = np.concatenate([np.full(per_class, c, dtype=np.int64) for _, c in parts])
            order = rng.permutation(len(y))
            return x[order], y[order]

        train_x, train_y = assemble(train_parts, per_class_train)
        val_x, val_y = assemble(val_parts, per_class_val)
        return cls(
            train_x=_freeze(train_x),
            train_y=train_y,
            val_x=_freeze(val_x),
            val_y=val_y,
            n_classes=n_classes,
            seed=seed,
        )

    @classmethod
    def from_arrays(cls, train_x, train_y, val_x, val_y, n_classes: int, seed: int = 0):
        return cls(
            train_x=_freeze(np.asarray(train_x, dtype=np.float64)),
            train_y=np.asarray(train_y, dtype=np.int64),
            val_x=_freeze(np.asarray(val_x, dtype=np.float64)),
            val_y=np.asarray(val_y, dtype=np.int64),
            n_classes=n_classes,
            seed=seed,
        )


# ---------------------------------------------------------------------------
# Model


@dataclass
class ToyModel:
    """Frozen-base toy network with trainable PEFT modules and head."""

    kind: str  # ADAPTER or LORA
    depth: int
    d_model: int
    d_in: int
    n_classes: int
    rng_seed: int
    embed_w: np.ndarray
    embed_b: np.ndarray
    blocks: list[dict[str, np.ndarray]]
    trainable: dict[str, np.ndarray] = field(default_factory=dict)
    lora_scaling: float = 1.0

    @classmethod
    def build(
        cls,
        kind: str,
        depth: int,
        d_model: int,
        d_in: int,
        n_classes: int,
        seed: int,
        bottleneck: int = 8,
        rank: int = 4,
    ) -> "ToyModel":
        if kind not in (ADAPTER, LORA):
            raise ValueError(f"unknown model kind {kind!r}")
        rng = np.random.default_rng(np.random.PCG64(seed))
        sd = 1.0 / np.sqrt(d_model)
        blocks = []
        for _ in range(depth):
            block = {
                "w": _freeze(rng.normal(0.0, sd, (d_model, d_model))),
                "b": _freeze(rng.normal(0.0, 0.01, d_model)),
            }
            if kind == LORA:
                block["wq"] = _freeze(rng.normal(0.0, sd, (d_model, d_model)))
                block["wk"] = _freeze(rng.normal(0.0, sd, (d_model, d_model)))
                block["wv"] = _freeze(rng.normal(0.0, sd, (d_model, d_model)))
            blocks.append(block)
        model = cls(
            kind=kind,
            depth=depth,
            d_model=d_model,
            d_in=d_in,
            n_classes=n_classes,
            rng_seed=seed,
            embed_w=_freeze(rng.normal(0.0, 1.0 / np.sqrt(d_in), (d_in, d_model))),
            embed_b=_freeze(np.zeros(d_model)),
            blocks=blocks,
        )
        model.init_trainable(seed=seed, bottleneck=bottleneck, rank=rank)
        return model

    # -- trainable parameter management ------------------------------------

    def init_trainable(self, seed: int, bottleneck: int = 8, rank: int = 4) -> None:
        """Fresh PEFT modules (near-identity/zero-delta) plus a fresh head."""
        rng = np.random.default_rng(np.random.PCG64([seed, 0xBEEF]))
        t: dict[str, np.ndarray] = {}
        sd = 1.0 / np.sqrt(self.d_model)
        for l in range(self.depth):
            if self.kind == ADAPTER:
                t[f"layer{l}/down_w"] = rng.normal(0.0, sd, (bottleneck, self.d_model))
                t[f"layer{l}/down_b"] = np.zeros(bottleneck)
                t[f"layer{l}/up_w"] = np.zeros((self.d_model, bottleneck))
                t[f"layer{l}/up_b"] = np.zeros(self.d_model)
            else:
                t[f"layer{l}/q_A"] = rng.normal(0.0, sd, (rank, self.d_model))
                t[f"layer{l}/q_B"] = np.zeros((self.d_model, rank))
                t[f"layer{l}/v_A"] = rng.normal(0.0, sd, (rank, self.d_model))
                t[f"layer{l}/v_B"] = np.zeros((self.d_model, rank))
        t["head_w"] = rng.normal(0.0, sd, (self.d_model, self.n_classes))
        t["head_b"] = np.zeros(self.n_classes)
        self.trainable = t

    def peft_set(self) -> PeftModuleSet:
        """Snapshot the current PEFT parameters as an immutable module set."""
        layers = []
        for l in range(self.depth):
            if self.kind == ADAPTER:
                layers.append(
                    AdapterParams(
                        down_weight=self.trainable[f"layer{l}/down_w"],
                        down_bias=self.trainable[f"layer{l}/down_b"],
                        up_weight=self.trainable[f"layer{l}/up_w"],
                        up_bias=self.trainable[f"layer{l}/up_b"],
                    )
                )
            else:
                layers.append(
                    LoraLayerParams(
                        query=LoraParams(
                            a_weight=self.trainable[f"layer{l}/q_A"],
                            b_weight=self.trainable[f"layer{l}/q_B"],
                            scaling=self.lora_scaling,
                        ),
                        value=LoraParams(
                            a_weight=self.trainable[f"layer{l}/v_A"],
                            b_weight=self.trainable[f"layer{l}/v_B"],
                            scaling=self.lora_scaling,
                        ),
                    )
                )
        return PeftModuleSet(kind=self.kind, d_model=self.d_model, per_layer=tuple(layers))

    def load_peft(self, module_set: PeftModuleSet) -> None:
        """Install a module set as the trainable PEFT parameters."""
        if module_set.kind != self.kind:
            raise ShapeMismatchError(f"module kind {module_set.kind} != model kind {self.kind}")
        if module_set.d_model != self.d_model:
            raise ShapeMismatchError(
                f"module d_model {module_set.d_model} != model d_model {self.d_model}"
            )
        if module_set.num_layers != self.depth:
            raise ShapeMismatchError(
                f"module set has {module_set.num_layers} layers, model has {self.depth}"
            )
        for l, p in enumerate(module_set.per_layer):
            if self.kind == ADAPTER:
                self.trainable[f"layer{l}/down_w"] = np.array(p.down_weight)
                self.trainable[f"layer{l}/down_b"] = np.array(p.down_bias)
                self.trainable[f"layer{l}/up_w"] = np.array(p.up_weight)
                self.trainable[f"layer{l}/up_b"] = np.array(p.up_bias)
            else:
                self.trainable[f"layer{l}/q_A"] = np.array(p.query.a_weight)
                self.trainable[f"layer{l}/q_B"] = np.array(p.query.b_weight)
                self.trainable[f"layer{l}/v_A"] = np.array(p.value.a_weight)
                self.trainable[f"layer{l}/v_B"] = np.array(p.value.b_weight)
                self.lora_scaling = p.query.scaling

    def set_head(self, head_w: np.ndarray, head_b: np.ndarray) -> None:
        if head_w.shape != (self.d_model, self.n_classes):
            raise ShapeMismatchError(
                f"head shape {head_w.shape} != ({self.d_model}, {self.n_classes})"
            )
        self.trainable["head_w"] = np.array(head_w)
        self.trainable["head_b"] = np.array(head_b)

    def clone(self) -> "ToyModel":
        """Copy sharing the frozen base, with independent trainable arrays."""
        return ToyModel(
            kind=self.kind,
            depth=self.depth,
            d_model=self.d_model,
            d_in=self.d_in,
            n_classes=self.n_classes,
            rng_seed=self.rng_seed,
            embed_w=self.embed_w,
            embed_b=self.embed_b,
            blocks=self.blocks,
            trainable={k: np.array(v) for k, v in self.trainable.items()},
            lora_scaling=self.lora_scaling,
        )

    # -- forward / backward -------------------------------------------------

    def _forward(self, x: np.ndarray, peft_active: bool = True):
        """Run the network, returning logits plus the caches backward needs."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != self.d_in:
            raise ShapeMismatchError(f"inputs must be (B, T, {self.d_in}), got {x.shape}")
        t = self.trainable
        h = x @ self.embed_w + self.embed_b
        caches = []
        for l, blk in enumerate(self.blocks):
            if self.kind == ADAPTER:
                z = h @ blk["w"] + blk["b"]
                u = np.tanh(z)
                if peft_active:
                    pre = u @ t[f"layer{l}/down_w"].T + t[f"layer{l}/down_b"]
                    r = np.maximum(pre, 0.0)
                    aout = r @ t[f"layer{l}/up_w"].T + t[f"layer{l}/up_b"] + u
                else:
                    pre = r = None
                    aout = u
                caches.append({"h_in": h, "u": u, "pre": pre, "r": r})
                h = h + aout
            else:
                s = self.lora_scaling if peft_active else 0.0
                aq = h @ t[f"layer{l}/q_A"].T
                av = h @ t[f"layer{l}/v_A"].T
                q = h @ blk["wq"] + s * (aq @ t[f"layer{l}/q_B"].T)
                k = h @ blk["wk"]
                v = h @ blk["wv"] + s * (av @ t[f"layer{l}/v_B"].T)
                scores = (q @ k.transpose(0, 2, 1)) / np.sqrt(self.d_model)
                p = _softmax(scores)
                o = p @ v
                h1 = h + o
                z = h1 @ blk["w"] + blk["b"]
                u = np.tanh(z)
                caches.append(
                    {"h_in": h, "aq": aq, "av": av, "q": q, "k": k, "v": v,
                     "p": p, "h1": h1, "u": u}
                )
                h = h1 + u
        pooled = h.mean(axis=1)
        logits = pooled @ t["head_w"] + t["head_b"]
        return logits, pooled, caches

    def logits(self, x: np.ndarray, peft_active: bool = True) -> np.ndarray:
        return self._forward(x, peft_active)[0]

    def loss(self, x: np.ndarray, y: np.ndarray) -> float:
        logits, _, _ = self._forward(x)
        probs = _softmax(logits)
        n = len(y)
        return float(-np.mean(np.log(probs[np.arange(n), y] + 1e-300)))

    def accuracy(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(np.mean(np.argmax(self.logits(x), axis=-1) == y))

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray):
        """Cross-entropy loss plus analytic gradients for every trainable array."""
        t = self.trainable
        logits, pooled, caches = self._forward(x)
        probs = _softmax(logits)
        n, tokens = x.shape[0], x.shape[1]
        loss = float(-np.mean(np.log(probs[np.arange(n), y] + 1e-300)))

        grads = {k: np.zeros_like(v) for k, v in t.items()}
        dlogits = probs.copy()
        dlogits[np.arange(n), y] -= 1.0
        dlogits /= n
        grads["head_w"] = pooled.T @ dlogits
        grads["head_b"] = dlogits.sum(axis=0)
        dpool = dlogits @ t["head_w"].T
        dh = np.repeat(dpool[:, None, :], tokens, axis=1) / tokens

        for l in reversed(range(self.depth)):
            blk, c = self.blocks[l], caches[l]
            if self.kind == ADAPTER:
                g = dh
                grads[f"layer{l}/up_w"] = np.einsum("btd,btk->dk", g, c["r"])
                grads[f"layer{l}/up_b"] = g.sum(axis=(0, 1))
                dr = g @ t[f"layer{l}/up_w"]
                dpre = dr * (c["pre"] > 0)
                grads[f"layer{l}/down_w"] = np.einsum("btk,btd->kd", dpre, c["u"])
                grads[f"layer{l}/down_b"] = dpre.sum(axis=(0, 1))
                du = g + dpre @ t[f"layer{l}/down_w"]
                dz = du * (1.0 - c["u"] ** 2)
                dh = g + dz @ blk["w"].T
            else:
                s = self.lora_scaling
                g = dh
                dz = g * (1.0 - c["u"] ** 2)
                dh1 = g + dz @ blk["w"].T
                do = dh1
                dh = dh1.copy()
                dp = do @ c["v"].transpose(0, 2, 1)
                dv = c["p"].transpose(0, 2, 1) @ do
                dscores = c["p"] * (dp - (dp * c["p"]).sum(axis=-1, keepdims=True))
                dscores /= np.sqrt(self.d_model)
                dq = dscores @ c["k"]
                dk = dscores.transpose(0, 2, 1) @ c["q"]
                dh += dq @ blk["wq"].T + dk @ blk["wk"].T + dv @ blk["wv"].T
                grads[f"layer{l}/q_B"] = s * np.einsum("btd,btr->dr", dq, c["aq"])
                daq = s * (dq @ t[f"layer{l}/q_B"])
                grads[f"layer{l}/q_A"] = np.einsum("btr,btd->rd", daq, c["h_in"])
                grads[f"layer{l}/v_B"] = s * np.einsum("btd,btr->dr", dv, c["av"])
                dav = s * (dv @ t[f"layer{l}/v_B"])
                grads[f"layer{l}/v_A"] = np.einsum("btr,btd->rd", dav, c["h_in"])
                dh += daq @ t[f"layer{l}/q_A"] + dav @ t[f"layer{l}/v_A"]
        return loss, grads

    def capture_hidden(self, x: np.ndarray, layer: int, peft_active: bool = False) -> np.ndarray:
        """Hidden states entering the PEFT insertion point of one layer.

        Adapter models: the block-core output feeding the adapter. LoRA
        models: the block input feeding the attention projections.
        Flattened to (B*T, d_model). PEFT modules are inactive by
        default so alignment does not depend on fine-tune state.
        """
        _, _, caches = self._forward(x, peft_active=peft_active)
        c = caches[layer]
        hid = c["u"] if self.kind == ADAPTER else c["h_in"]
        return hid.reshape(-1, self.d_model)

    # -- serialization -------------------------------------------------------

    def to_container(self) -> TensorContainer:
        c = TensorContainer(
            meta={
                "model": "toy",
                "kind": self.kind,
                "depth": str(self.depth),
                "d_model": str(self.d_model),
                "d_in": str(self.d_in),
                "n_classes": str(self.n_classes),
                "rng_seed": str(self.rng_seed),
                "lora_scaling": repr(self.lora_scaling),
            }
        )
        c.add("embed/weight", self.embed_w, "f64")
        c.add("embed/bias", self.embed_b, "f64")
        for l, blk in enumerate(self.blocks):
            for key, arr in blk.items():
                c.add(f"block_{l}/{key}", arr, "f64")
        for name, arr in self.trainable.items():
            c.add(f"trainable/{name}", arr, "f64")
        return c

    @classmethod
    def from_container(cls, c: TensorContainer) -> "ToyModel":
        depth = int(c.meta["depth"])
        blocks = []
        for l in range(depth):
            keys = [n.split("/", 1)[1] for n in c.names() if n.startswith(f"block_{l}/")]
            blocks.append({k: _freeze(c.tensor(f"block_{l}/{k}")) for k in keys})
        trainable = {
            n[len("trainable/"):]: np.array(c.tensor(n))
            for n in c.names()
            if n.startswith("trainable/")
        }
        trainable = {
            k: (v.ravel() if k.endswith(("_b", "down_b", "up_b")) or k == "head_b" else v)
            for k, v in trainable.items()
        }
        return cls(
            kind=c.meta["kind"],
            depth=depth,
            d_model=int(c.meta["d_model"]),
            d_in=int(c.meta["d_in"]),
            n_classes=int(c.meta["n_classes"]),
            rng_seed=int(c.meta["rng_seed"]),
            embed_w=_freeze(c.tensor("embed/weight")),
            embed_b=_freeze(c.tensor("embed/bias").ravel()),
            blocks=blocks,
            trainable=trainable,
            lora_scaling=float(c.meta["lora_scaling"]),
        )


# ---------------------------------------------------------------------------
# Pair construction, training, capture


@dataclass(frozen=True)
class PairConfig:
    kind: str = ADAPTER
    mode: str = MATCHING
    teacher_depth: int = 4
    student_depth: int = 2
    d_teacher: int = 32
    d_student: int = 32
    d_in: int = 32
    n_classes: int = 4
    seed: int = 0
    bottleneck: int = 8
    rank: int = 4

    def __post_init__(self):
        if self.mode not in (MATCHING, INCOMPATIBLE):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.teacher_depth % self.student_depth != 0:
            raise LayerCountError(
                f"teacher depth {self.teacher_depth} not divisible by "
                f"student depth {self.student_depth}"
            )
        if self.mode == MATCHING and self.d_teacher != self.d_student:
            raise ValueError("matching mode requires equal hidden dims")
        if self.d_student > self.d_teacher:
            raise ValueError("student dim cannot exceed teacher dim")


def build_pair(config: PairConfig) -> tuple[ToyModel, ToyModel]:
    """Teacher and student models per the configuration.

    Matching mode copies alternating teacher blocks (and the embedding)
    into the student, standing in for task-agnostic distillation: the
    student shares the teacher's latent features by construction.
    Incompatible mode initializes the student independently.
    """
    teacher = ToyModel.build(
        config.kind, config.teacher_depth, config.d_teacher, config.d_in,
        config.n_classes, seed=config.seed, bottleneck=config.bottleneck,
        rank=config.rank,
    )
    if config.mode == MATCHING:
        student = ToyModel.build(
            config.kind, config.student_depth, config.d_student, config.d_in,
            config.n_classes, seed=config.seed + 1, bottleneck=config.bottleneck,
            rank=config.rank,
        )
        stride = config.teacher_depth // config.student_depth
        student.embed_w = teacher.embed_w
        student.embed_b = teacher.embed_b
        student.blocks = [
            teacher.blocks[l * stride + stride - 1] for l in range(config.student_depth)
        ]
    else:
        student = ToyModel.build(
            config.kind, config.student_depth, config.d_student, config.d_in,
            config.n_classes, seed=config.seed + 1, bottleneck=config.bottleneck,
            rank=config.rank,
        )
    return teacher, student


def train_peft(
    model: ToyModel,
    task: ToyTask,
    epochs: int = 3,
    lr: float = 0.1,
    batch: int = 64,
    shuffle_seed: int = 0,
) -> dict:
    """Plain-SGD PEFT training; returns the per-epoch log.

    Only the trainable dict updates; frozen base arrays are shared and
    read-only. Data order depends on shuffle_seed alone, so two models
    trained with the same seed see identical batches.
    """
    if task.d_in != model.d_in:
        raise ShapeMismatchError(f"task d_in {task.d_in} != model d_in {model.d_in}")
    log = {
        "step0_loss": model.loss(task.train_x, task.train_y),
        "epochs": [],
    }
    rng = np.random.default_rng(np.random.PCG64([shuffle_seed, 0xDA7A]))
    n = len(task.train_y)
    for _ in range(epochs):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, batch):
            idx = order[start : start + batch]
            loss, grads = model.loss_and_grads(task.train_x[idx], task.train_y[idx])
            for name, g in grads.items():
                model.trainable[name] = model.trainable[name] - lr * g
            losses.append(loss)
        log["epochs"].append(
            {
                "train_loss": float(np.mean(losses)),
                "val_accuracy": model.accuracy(task.val_x, task.val_y),
            }
        )
    return log


def capture_samples(
    teacher: ToyModel,
    student: ToyModel,
    plan: LayerMapPlan,
    inputs: np.ndarray,
    n: int,
) -> SampleBatch:
    """Matched embeddings at the PEFT insertion points of both models.

    For each student layer the paired teacher layer is the plan's
    selected index (last of the group under AVG). Captured with PEFT
    inactive; each of the n inputs contributes one sample per token.
    """
    if n < 2:
        raise TooFewSamplesError(f"need at least 2 capture inputs, got {n}")
    if plan.student_layers != student.depth:
        raise ShapeMismatchError(
            f"plan covers {plan.student_layers} layers, student has {student.depth}"
        )
    x = np.asarray(inputs, dtype=np.float64)[:n]
    if len(x) < n:
        raise ValueError(f"only {len(x)} inputs available, {n} requested")
    pairs = []
    for l, group in enumerate(plan.groups):
        xs = student.capture_hidden(x, l)
        xt = teacher.capture_hidden(x, group[-1])
        pairs.append((xs, xt))
    return SampleBatch(per_layer=tuple(pairs), plan=plan)
