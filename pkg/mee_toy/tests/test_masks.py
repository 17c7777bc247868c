import torch

from mee_toy.config import EncoderConfig
from mee_toy.model import MapElementEncoder, build_masks
from tests.conftest import toy_rule, toy_sign, toy_vectors


def make_model(**overrides) -> MapElementEncoder:
    torch.manual_seed(0)
    return MapElementEncoder(EncoderConfig(**overrides))


class TestMaskStructure:
    def test_intra_is_block_diagonal(self):
        model = make_model()
        batch = model.embed_points(toy_vectors(n_vectors=2, n_points=3), [0, 1])
        intra, inter = build_masks(batch)
        expected = torch.block_diag(torch.ones(4, 4, dtype=torch.bool),
                                    torch.ones(4, 4, dtype=torch.bool))
        assert torch.equal(intra, expected)

    def test_inter_adds_only_the_vec_cross_block(self):
        model = make_model()
        batch = model.embed_points(toy_vectors(n_vectors=2, n_points=3), [0, 1])
        intra, inter = build_masks(batch)
        extra = inter & ~intra
        coords = extra.nonzero().tolist()
        vec_rows = batch.is_vec.nonzero().flatten().tolist()
        assert sorted(coords) == sorted(
            [[i, j] for i in vec_rows for j in vec_rows if i != j]
        )

    def test_masks_symmetric(self):
        model = make_model()
        batch = model.embed_points(toy_vectors(n_vectors=3, n_points=4), [2, 0, 1])
        intra, inter = build_masks(batch)
        assert torch.equal(intra, intra.T)
        assert torch.equal(inter, inter.T)

    def test_single_instance_masks_coincide(self):
        model = make_model()
        batch = model.embed_points(toy_vectors(n_vectors=1, n_points=5), [0])
        intra, inter = build_masks(batch)
        assert torch.equal(intra, inter)
        assert intra.all()


class TestAttentionFlow:
    def test_no_weight_between_point_tokens_of_different_instances(self):
        """Probe the actual attention weights in every encoder layer."""
        model = make_model(vector_depth=4)  # both mask regimes, twice
        vectors = toy_vectors(n_vectors=3, n_points=4)
        batch = model.embed_points(vectors, [1, 2, 0])
        rule_emb = model.embed_rule(toy_rule(), toy_sign())
        sink = []
        model(batch, rule_emb, attention_sink=sink)
        assert len(sink) == 4

        cross_instance = batch.instance_ids.unsqueeze(0) != batch.instance_ids.unsqueeze(1)
        point_pair = ~batch.is_vec.unsqueeze(0) & ~batch.is_vec.unsqueeze(1)
        forbidden = cross_instance & point_pair
        for weights in sink:  # (B, H, T, T)
            assert float(weights[..., forbidden].abs().max()) == 0.0

    def test_intra_layers_block_even_vec_exchange(self):
        model = make_model(mask_schedule="intra_only", vector_depth=2)
        batch = model.embed_points(toy_vectors(n_vectors=2, n_points=3), [0, 1])
        rule_emb = model.embed_rule(toy_rule(), toy_sign())
        sink = []
        model(batch, rule_emb, attention_sink=sink)
        cross = batch.instance_ids.unsqueeze(0) != batch.instance_ids.unsqueeze(1)
        for weights in sink:
            assert float(weights[..., cross].abs().max()) == 0.0
