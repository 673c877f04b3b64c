"""Whole-model configuration and parameters, with stable parameter names."""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .moa_backbone import LayerParams, ViTConfig, ViTParams
from .numerics import F32, MlpSpec
from .pose_graph import GraphConfig, GraphParams, MbfParams


@dataclass(frozen=True)
class ModelConfig:
    vit: ViTConfig
    graph: GraphConfig
    human_class: int = 0

    @classmethod
    def preset(cls, name: str) -> "ModelConfig":
        if name == "tiny":
            vit = ViTConfig(patch_size=16, embed_dim=32, num_heads=2, num_layers=2, mlp_ratio=2, image_size=64)
            graph = GraphConfig(feat_dim=32, node_dim=16, edge_dim=16, att_dim=8, mbf_branches=4, mbf_dim=8,
                                num_verbs=4, steps=2)
        elif name in ("vit-b32", "vit-b16"):
            p = 32 if name == "vit-b32" else 16
            vit = ViTConfig(patch_size=p, embed_dim=768, num_heads=12, num_layers=12, mlp_ratio=4, image_size=672)
            graph = GraphConfig(feat_dim=768)
        else:
            raise ValueError(f"unknown preset {name!r}")
        return cls(vit, graph)

    def header_fields(self) -> list[int]:
        v, g = self.vit, self.graph
        return [v.patch_size, v.image_size, v.embed_dim, v.num_heads, v.num_layers, v.mlp_ratio,
                g.node_dim, g.edge_dim, g.att_dim, g.mbf_branches, g.mbf_dim, g.num_verbs, g.steps,
                self.human_class]

    @classmethod
    def from_header_fields(cls, vals) -> "ModelConfig":
        (patch, image, dim, heads, layers, ratio, node, edge, att, branches, mbf, verbs, steps, human) = vals
        vit = ViTConfig(patch, dim, heads, layers, ratio, image)
        graph = GraphConfig(dim, node, edge, att, branches, mbf, verbs, steps)
        return cls(vit, graph, human)


HEADER_FIELD_COUNT = 14


@dataclass
class Model:
    config: ModelConfig
    vit: ViTParams
    graph: GraphParams

    @classmethod
    def random(cls, config: ModelConfig, seed: int = 0) -> "Model":
        rng = np.random.default_rng(seed)
        return cls(config, ViTParams.random(config.vit, rng), GraphParams.random(config.graph, rng))

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = [("vit.patch_w", self.vit.patch_w), ("vit.patch_b", self.vit.patch_b),
               ("vit.cls_token", self.vit.cls_token), ("vit.pos_embed", self.vit.pos_embed)]
        for i, lp in enumerate(self.vit.layers):
            out += [(f"vit.layers.{i}.{f.name}", getattr(lp, f.name)) for f in fields(LayerParams)]
        g = self.graph
        for name in ("node_encoder", "edge_encoder", "query_mlp", "key_mlp", "local_proj"):
            spec: MlpSpec = getattr(g, name)
            for i, (w, b) in enumerate(zip(spec.weights, spec.biases)):
                out += [(f"graph.{name}.{i}.w", w), (f"graph.{name}.{i}.b", b)]
        for name in ("mbf_o", "mbf_h", "mbf_cls"):
            mbf: MbfParams = getattr(g, name)
            out += [(f"graph.{name}.{f.name}", getattr(mbf, f.name)) for f in fields(MbfParams)]
        out += [("graph.ln_h.g", g.ln_h[0]), ("graph.ln_h.b", g.ln_h[1]),
                ("graph.ln_o.g", g.ln_o[0]), ("graph.ln_o.b", g.ln_o[1]),
                ("graph.cls_w", g.cls_w), ("graph.cls_b", g.cls_b)]
        return [(n, np.ascontiguousarray(a, dtype=F32)) for n, a in out]

    @classmethod
    def from_named(cls, config: ModelConfig, arrays: dict[str, np.ndarray]) -> "Model":
        """Rebuild a model, checking every expected parameter and its extents."""
        template = cls.random(config, seed=0)
        expected = dict(template.named_arrays())
        missing = expected.keys() - arrays.keys()
        extra = arrays.keys() - expected.keys()
        if missing or extra:
            raise ValueError(f"weight names mismatch: missing {sorted(missing)[:5]}, unexpected {sorted(extra)[:5]}")
        for name, ref in expected.items():
            if arrays[name].shape != ref.shape:
                raise ValueError(f"{name}: shape {arrays[name].shape} does not match config {ref.shape}")
        a = arrays
        layers = [LayerParams(**{f.name: a[f"vit.layers.{i}.{f.name}"] for f in fields(LayerParams)})
                  for i in range(config.vit.num_layers)]
        vit = ViTParams(a["vit.patch_w"], a["vit.patch_b"], a["vit.cls_token"], a["vit.pos_embed"], layers)

        def mlp(name):
            spec = getattr(template.graph, name)
            n = len(spec.weights)
            return MlpSpec(list(spec.widths), [a[f"graph.{name}.{i}.w"] for i in range(n)],
                           [a[f"graph.{name}.{i}.b"] for i in range(n)])

        def mbf(name):
            return MbfParams(**{f.name: a[f"graph.{name}.{f.name}"] for f in fields(MbfParams)})

        graph = GraphParams(
            node_encoder=mlp("node_encoder"), edge_encoder=mlp("edge_encoder"), query_mlp=mlp("query_mlp"),
            key_mlp=mlp("key_mlp"), local_proj=mlp("local_proj"), mbf_o=mbf("mbf_o"), mbf_h=mbf("mbf_h"),
            ln_h=(a["graph.ln_h.g"], a["graph.ln_h.b"]), ln_o=(a["graph.ln_o.g"], a["graph.ln_o.b"]),
            mbf_cls=mbf("mbf_cls"), cls_w=a["graph.cls_w"], cls_b=a["graph.cls_b"], config=config.graph,
        )
        return cls(config, vit, graph)
