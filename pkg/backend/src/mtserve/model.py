"""Tiny byte-level causal language model used as a local proxy.

The real system fine-tunes a large pretrained decoder; everything here only
needs the same surface: a causal LM over a fixed vocabulary with beam-search
generation and plain Linear projections that adapters can wrap. Byte-level
tokenization keeps the vocab at 256 + 3 specials and avoids any external
tokenizer.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass

import torch
from torch import nn
from torch.nn import functional as F

PAD_ID = 256
BOS_ID = 257
EOS_ID = 258
VOCAB_SIZE = 259


@dataclass(frozen=True)
class ProxyConfig:
    d_model: int = 64
    n_heads: int = 2
    n_layers: int = 2
    d_ff: int = 128
    max_len: int = 512
    dropout: float = 0.0

    def __post_init__(self) -> None:
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")
        if self.max_len < 2:
            raise ValueError("max_len must be at least 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")


def encode_text(text: str) -> list[int]:
    return list(text.encode("utf-8"))


def decode_ids(ids: list[int]) -> str:
    data = bytes(i for i in ids if i < 256)
    return data.decode("utf-8", errors="replace")


class SelfAttention(nn.Module):
    def __init__(self, cfg: ProxyConfig) -> None:
        super().__init__()
        self.n_heads = cfg.n_heads
        self.head_dim = cfg.d_model // cfg.n_heads
        self.dropout = cfg.dropout
        self.q_proj = nn.Linear(cfg.d_model, cfg.d_model)
        self.k_proj = nn.Linear(cfg.d_model, cfg.d_model)
        self.v_proj = nn.Linear(cfg.d_model, cfg.d_model)
        self.out_proj = nn.Linear(cfg.d_model, cfg.d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        batch, seq, _ = x.shape

        def split(t: torch.Tensor) -> torch.Tensor:
            return t.view(batch, seq, self.n_heads, self.head_dim).transpose(1, 2)

        q, k, v = split(self.q_proj(x)), split(self.k_proj(x)), split(self.v_proj(x))
        out = F.scaled_dot_product_attention(
            q, k, v,
            dropout_p=self.dropout if self.training else 0.0,
            is_causal=True,
        )
        out = out.transpose(1, 2).reshape(batch, seq, -1)
        return self.out_proj(out)


class Block(nn.Module):
    def __init__(self, cfg: ProxyConfig) -> None:
        super().__init__()
        self.ln1 = nn.LayerNorm(cfg.d_model)
        self.attn = SelfAttention(cfg)
        self.ln2 = nn.LayerNorm(cfg.d_model)
        self.linear1 = nn.Linear(cfg.d_model, cfg.d_ff)
        self.linear2 = nn.Linear(cfg.d_ff, cfg.d_model)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.ln1(x))
        x = x + self.drop(self.linear2(F.gelu(self.linear1(self.ln2(x)))))
        return x


class ProxyLM(nn.Module):
    def __init__(self, config: ProxyConfig | None = None) -> None:
        super().__init__()
        self.config = config or ProxyConfig()
        cfg = self.config
        self.tok_emb = nn.Embedding(VOCAB_SIZE, cfg.d_model, padding_idx=PAD_ID)
        self.pos_emb = nn.Embedding(cfg.max_len, cfg.d_model)
        self.blocks = nn.ModuleList(Block(cfg) for _ in range(cfg.n_layers))
        self.norm = nn.LayerNorm(cfg.d_model)
        self.head = nn.Linear(cfg.d_model, VOCAB_SIZE, bias=False)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def forward(self, input_ids: torch.Tensor) -> torch.Tensor:
        # input_ids: (batch, seq) -> logits (batch, seq, vocab)
        _, seq_len = input_ids.shape
        if seq_len > self.config.max_len:
            raise ValueError(
                f"sequence length {seq_len} exceeds max_len {self.config.max_len}"
            )
        positions = torch.arange(seq_len, device=input_ids.device)
        x = self.tok_emb(input_ids) + self.pos_emb(positions)[None, :, :]
        for block in self.blocks:
            x = block(x)
        return self.head(self.norm(x))

    @torch.no_grad()
    def generate(
        self,
        prompt_ids: list[int],
        beam_size: int = 3,
        max_new_tokens: int = 256,
        length_penalty: float = 1.0,
        sampling: bool = False,
        generator: torch.Generator | None = None,
    ) -> list[int]:
        """Return generated token ids (specials stripped by the caller).

        Beam scores are summed log-probs divided by generated-length **
        length_penalty; sampling draws one sequence token by token instead.
        """
        if beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
        device = next(self.parameters()).device
        prompt = [BOS_ID] + list(prompt_ids)
        budget = min(max_new_tokens, self.config.max_len - len(prompt))
        if budget < 1:
            return []
        self.eval()
        if sampling:
            return self._sample(prompt, budget, device, generator)
        return self._beam(prompt, budget, beam_size, length_penalty, device)

    def _sample(
        self,
        prompt: list[int],
        budget: int,
        device: torch.device,
        generator: torch.Generator | None,
    ) -> list[int]:
        ids = list(prompt)
        out: list[int] = []
        for _ in range(budget):
            logits = self(torch.tensor([ids], device=device))[0, -1]
            probs = torch.softmax(logits, dim=-1)
            nxt = int(torch.multinomial(probs, 1, generator=generator).item())
            if nxt == EOS_ID:
                break
            ids.append(nxt)
            out.append(nxt)
        return out

    def _beam(
        self,
        prompt: list[int],
        budget: int,
        beam_size: int,
        length_penalty: float,
        device: torch.device,
    ) -> list[int]:
        # Each beam: (ids, summed logprob, finished)
        beams: list[tuple[list[int], float, bool]] = [(list(prompt), 0.0, False)]
        for _ in range(budget):
            live = [b for b in beams if not b[2]]
            if not live:
                break
            batch = torch.tensor([b[0] for b in live], device=device)
            logprobs = torch.log_softmax(self(batch)[:, -1, :], dim=-1)
            top = torch.topk(logprobs, beam_size, dim=-1)
            candidates: list[tuple[list[int], float, bool]] = [
                b for b in beams if b[2]
            ]
            for row, (ids, score, _) in enumerate(live):
                for lp, tok in zip(top.values[row], top.indices[row]):
                    tok_id = int(tok.item())
                    new_score = score + float(lp.item())
                    if tok_id == EOS_ID:
                        candidates.append((ids, new_score, True))
                    else:
                        candidates.append((ids + [tok_id], new_score, False))
            candidates.sort(key=lambda b: b[1], reverse=True)
            beams = candidates[:beam_size]
        prompt_len = len(prompt)

        def final_score(beam: tuple[list[int], float, bool]) -> float:
            gen_len = max(len(beam[0]) - prompt_len, 1)
            return beam[1] / math.pow(gen_len, length_penalty)

        best = max(beams, key=final_score)
        return best[0][prompt_len:]


def save_model(model: ProxyLM, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(asdict(model.config), fh, sort_keys=True)
        fh.write("\n")
    torch.save(model.state_dict(), os.path.join(out_dir, "weights.pt"))


def load_model(model_dir: str) -> ProxyLM:
    config_path = os.path.join(model_dir, "config.json")
    with open(config_path, encoding="utf-8") as fh:
        config = ProxyConfig(**json.load(fh))
    model = ProxyLM(config)
    state = torch.load(
        os.path.join(model_dir, "weights.pt"), map_location="cpu", weights_only=True
    )
    model.load_state_dict(state)
    return model


def new_model(seed: int = 0, config: ProxyConfig | None = None) -> ProxyLM:
    torch.manual_seed(seed)
    return ProxyLM(config)
