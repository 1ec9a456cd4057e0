import json

import numpy as np
import pytest

from stochmhd import config
from stochmhd import spectral as sp
from stochmhd.errors import HypothesisViolationError
from stochmhd.estimates import shared_mode_map


class TestLoading:
    def test_builtins_load_and_validate(self):
        names = config.builtin_names()
        assert {"default", "ergodic", "monotone", "convergence"} <= set(names)
        for name in names:
            config.load(f"builtin:{name}").validate()

    def test_defaults_filled(self):
        cfg = config.loads("[run]\nseed = 3\n")
        assert cfg.seed == 3
        assert cfg.discretization.cutoff == 16

    def test_echo_roundtrip(self):
        cfg = config.load("builtin:ergodic").with_overrides(["noise.q_decay=0.5"])
        again = config.loads(cfg.dump_ini())
        assert again.to_dict() == cfg.to_dict()

    def test_json_equivalent(self):
        cfg = config.load("builtin:monotone")
        assert config.loads(json.dumps(cfg.to_dict())).to_dict() == cfg.to_dict()

    def test_parse_error_names_line(self):
        with pytest.raises(config.ConfigError, match=r"physical\.re \(line 3\)"):
            config.loads("[physical]\n# comment\nre = fast\n")

    def test_unknown_field(self):
        with pytest.raises(config.ConfigError, match="bogus"):
            config.loads("[noise]\nbogus = 1\n")

    def test_unknown_builtin(self):
        with pytest.raises(config.ConfigError):
            config.load("builtin:nope")

    def test_override_validation(self):
        cfg = config.default_config()
        with pytest.raises(config.ConfigError):
            cfg.with_overrides(["cutoff=4"])
        assert cfg.with_overrides(["discretization.cutoff=4"]).discretization.cutoff == 4

    def test_lipschitz_checked_at_load(self):
        cfg = config.loads("[noise]\ng_kind = multiplicative-bounded\ngamma1 = 5\n")
        with pytest.raises(HypothesisViolationError):
            cfg.validate()


class TestInitialStates:
    def test_default_state_norm_and_support(self):
        cfg = config.default_config()
        x = cfg.initial_state()
        assert sp.norm_h(x) == pytest.approx(1.0)
        ms = sp.wave_indices(x.cutoff)
        outside = (np.abs(ms.k1) > 4) | (np.abs(ms.k2) > 4)
        assert np.all(x.u.coeffs[outside] == 0)

    def test_state_independent_of_cutoff(self):
        cfg = config.load("builtin:convergence")
        a, b = cfg.initial_state(cutoff=8), cfg.initial_state(cutoff=16)
        idx = shared_mode_map(8, 16)
        assert np.array_equal(a.u.coeffs, b.u.coeffs[idx])
        rest = np.setdiff1d(np.arange(sp.mode_count(16)), idx)
        assert np.all(b.u.coeffs[rest] == 0)

    def test_zero_state(self):
        cfg = config.default_config()
        assert sp.norm_h(cfg.initial_state("b")) == 0.0

    def test_embed(self, rng):
        x = sp.random_state(3, 1.0, rng)
        y = config.embed(x, 5)
        assert sp.norm_h(y) == pytest.approx(sp.norm_h(x))
