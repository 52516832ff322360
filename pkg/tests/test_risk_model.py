import json
import warnings

import numpy as np
import pytest
from scipy import special

from fairrisk.errors import DomainError, SchemaError
from fairrisk.figures import synthetic_gender_data
from fairrisk.metrics import calibration_curve, quantile_edges
from fairrisk.risk_model import (Dataset, ElasticNetConfig, LogisticModel, cross_validate, fit, fit_group_specific,
                                 ingest_csv, load_schema, log_likelihood, penalized_gradient, penalized_objective,
                                 predict, risk_distributions, score_population)

from irls import irls

FIXTURE_SCHEMA = {"label": "two_year_recid", "group": "race", "features": ["age", "priors", "sex", "race"],
                  "categorical": ["sex", "race"], "protected": ["sex", "race"]}


def logistic_data(n=400, p=3, seed=3, coef=(0.8, -0.5, 0.3), groups=None):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    eta = -0.4 + X @ np.asarray(coef[:p])
    y = (rng.random(n) < special.expit(eta)).astype(np.int8)
    g = np.array(["a"] * n, dtype=object) if groups is None else groups
    return Dataset(X, y, g, tuple(f"x{j}" for j in range(p)), np.zeros(p, bool))


EXACT = ElasticNetConfig(l1=0.0, l2=0.0, tol=1e-12, max_iter=20000)


# ---------------------------------------------------------------- ingestion

def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_three_row_fixture_one_hot_widths(tmp_path):
    p = write(tmp_path, "age,priors,sex,race,two_year_recid\n"
                        "25,0,Male,African-American,1\n"
                        "40,3,Female,Caucasian,0\n"
                        "33,1,Male,Hispanic,0\n")
    data = ingest_csv(p, FIXTURE_SCHEMA)
    assert len(data) == 3 and data.n_dropped == 0
    # age, priors, sex: 2 levels -> 1 column, race: 3 levels -> 2 columns
    assert data.X.shape == (3, 5)
    assert data.feature_names == ("age", "priors", "sex=Male", "race=Caucasian", "race=Hispanic")
    assert data.protected_mask.tolist() == [False, False, True, True, True]
    assert data.y.tolist() == [1, 0, 0]


def test_missing_label_column_named(tmp_path):
    p = write(tmp_path, "age,priors,sex,race\n25,0,Male,Caucasian\n")
    with pytest.raises(SchemaError, match="two_year_recid"):
        ingest_csv(p, FIXTURE_SCHEMA)


def test_bad_rows_counted_and_skipped(tmp_path):
    p = write(tmp_path, "age,priors,sex,race,two_year_recid\n"
                        "25,0,Male,Caucasian,1\n"
                        "abc,0,Male,Caucasian,1\n"
                        "30,,Female,Caucasian,0\n"
                        "31,2,Female,Caucasian,7\n"
                        "31,2,Female,Caucasian,0,extra,fields\n"
                        "44,1,Female,Caucasian,0\n")
    data = ingest_csv(p, FIXTURE_SCHEMA)
    assert len(data) == 2 and data.n_dropped == 4


def test_bundled_schema_filters_and_group_mapping(tmp_path):
    schema = load_schema()
    assert schema.label == "two_year_recid" and "race" in schema.protected
    cols = ["sex", "age", "juv_fel_count", "juv_misd_count", "juv_other_count", "priors_count",
            "c_charge_degree", "decile_score", "v_decile_score", "race", "two_year_recid",
            "days_b_screening_arrest", "is_recid"]
    rows = [["Male", 30, 0, 0, 0, 2, "F", 5, 4, "African-American", 1, 0, 1],
            ["Female", 40, 0, 0, 0, 0, "M", 2, 1, "Caucasian", 0, -1, 0],
            ["Male", 22, 0, 0, 0, 1, "F", 3, 3, "Caucasian", 0, 45, 0],     # screening window
            ["Male", 22, 0, 0, 0, 1, "O", 3, 3, "Caucasian", 0, 0, 0],      # ordinary traffic
            ["Male", 22, 0, 0, 0, 1, "F", 3, 3, "Caucasian", 0, 0, -1],     # no case
            ["Male", 50, 0, 1, 0, 4, "M", 6, 5, "Hispanic", 1, 1, 1]]       # outside groups
    text = ",".join(cols) + "\n" + "\n".join(",".join(map(str, r)) for r in rows) + "\n"
    data = ingest_csv(write(tmp_path, text), schema)
    assert len(data) == 2 and data.n_filtered == 4
    assert data.group_names == ["black", "white"]
    assert data.label_rates() == {"black": 1.0, "white": 0.0}


def test_schema_requires_keys():
    with pytest.raises(SchemaError):
        ingest_csv("unused.csv", {"label": "y", "group": "g"})


def test_compas_group_label_rates(compas_csv):
    if compas_csv is None:
        pytest.skip("no COMPAS CSV supplied (--compas-csv)")
    rates = ingest_csv(compas_csv).label_rates()
    assert abs(rates["black"] - 0.21) <= 0.03 and abs(rates["white"] - 0.12) <= 0.03


def test_dataset_validation():
    with pytest.raises(DomainError):
        Dataset(np.zeros((2, 1)), np.zeros(3), np.array(["a"] * 3), ("x",), np.zeros(1, bool))
    with pytest.raises(DomainError):
        Dataset(np.array([[np.nan]]), np.zeros(1), np.array(["a"]), ("x",), np.zeros(1, bool))


# ---------------------------------------------------------------- fit

def test_unpenalized_fit_matches_irls():
    data = logistic_data()
    ref = irls(data.X, data.y.astype(float))
    model = fit(data, EXACT)
    assert model.converged
    assert abs(model.intercept - ref[0]) < 1e-6
    assert np.max(np.abs(model.weights - ref[1:])) < 1e-6


def test_unstandardized_fit_matches_irls():
    data = logistic_data(seed=11)
    ref = irls(data.X, data.y.astype(float))
    model = fit(data, ElasticNetConfig(l1=0.0, l2=0.0, tol=1e-12, max_iter=20000, standardize=False))
    assert np.max(np.abs(np.r_[model.intercept, model.weights] - ref)) < 1e-6


def test_heavy_l1_zeroes_weights_and_sets_logit_intercept():
    data = logistic_data()
    model = fit(data, ElasticNetConfig(l1=10.0, l2=0.0))
    assert np.all(model.weights == 0.0)
    assert model.intercept == special.logit(data.y.mean())


def test_duplicated_rows_leave_fit_unchanged():
    data = logistic_data(n=200)
    twice = Dataset(np.vstack([data.X, data.X]), np.r_[data.y, data.y], np.r_[data.groups, data.groups],
                    data.feature_names, data.protected_mask)
    cfg = ElasticNetConfig(tol=1e-12, max_iter=20000)
    a, b = fit(data, cfg), fit(twice, cfg)
    assert abs(a.intercept - b.intercept) < 1e-9
    assert np.max(np.abs(a.weights - b.weights)) < 1e-9


def test_fit_is_deterministic():
    data = logistic_data()
    a, b = fit(data), fit(data)
    assert a.intercept == b.intercept and np.array_equal(a.weights, b.weights)


def test_objective_nonincreasing_across_sweeps():
    data = logistic_data(n=300, seed=8)
    for cfg in (ElasticNetConfig(l1=0.01, l2=0.01, tol=1e-10), EXACT):
        trace = []
        fit(data, cfg, trace=trace)
        assert len(trace) > 2
        assert np.all(np.diff(trace) <= 1e-15)


def test_single_class_rejected():
    data = logistic_data(n=10)
    one = Dataset(data.X, np.zeros(10, np.int8), data.groups, data.feature_names, data.protected_mask)
    with pytest.raises(DomainError):
        fit(one)


def test_non_convergence_flags_and_warns():
    data = logistic_data()
    with pytest.warns(RuntimeWarning):
        model = fit(data, ElasticNetConfig(l1=0.0, l2=0.0, tol=1e-14, max_iter=1))
    assert not model.converged


def test_config_validation():
    with pytest.raises(DomainError):
        ElasticNetConfig(l1=-1.0)
    with pytest.raises(DomainError):
        ElasticNetConfig(tol=0.0)


def test_gradient_matches_finite_differences():
    data = logistic_data(n=150, seed=4)
    rng = np.random.default_rng(12)
    h = 1e-6
    for k in range(20):
        theta = rng.normal(scale=0.8, size=4)
        l1 = 0.0 if k < 10 else 0.05
        # keep l1 points away from the kink at zero
        theta[1:] = np.where(np.abs(theta[1:]) < 10 * h, 0.5, theta[1:])
        g = penalized_gradient(theta, data.X, data.y, l1, 0.1)
        fd = np.array([(penalized_objective(theta + h * e, data.X, data.y, l1, 0.1)
                        - penalized_objective(theta - h * e, data.X, data.y, l1, 0.1)) / (2 * h)
                       for e in np.eye(4)])
        assert np.max(np.abs(g - fd)) < 1e-5


def test_unpenalized_fit_is_calibrated_on_deciles():
    rng = np.random.default_rng(21)
    X = rng.normal(size=(20000, 2))
    y = (rng.random(20000) < special.expit(-1.0 + X @ [1.0, -0.7])).astype(np.int8)
    data = Dataset(X, y, np.array(["a"] * 20000, dtype=object), ("u", "v"), np.zeros(2, bool))
    pop = score_population(data, fit(data, ElasticNetConfig(l1=0.0, l2=0.0, tol=1e-10)))
    recs = pop["a"]
    for b in calibration_curve(recs, quantile_edges(recs.scores, 10)).bins:
        se = np.sqrt(b.mean_score * (1 - b.mean_score) / b.weight)
        assert abs(b.positive_rate - b.mean_score) <= 3 * se


def test_model_json_round_trip():
    model = fit(logistic_data())
    back = LogisticModel.from_dict(json.loads(json.dumps(model.to_dict())))
    assert back.intercept == model.intercept and np.array_equal(back.weights, model.weights)
    assert back.config == model.config and back.feature_names == model.feature_names


# ---------------------------------------------------------------- predict

def test_predict_examples():
    zero = LogisticModel(("x",), np.zeros(1), 0.0)
    assert predict(zero, [[3.0]])[0] == 0.5
    base = LogisticModel(("x",), np.zeros(1), float(special.logit(0.21)))
    assert predict(base, [[3.0]])[0] == pytest.approx(0.21, abs=1e-15)


def test_predict_monotone_and_strictly_inside():
    m = LogisticModel(("x", "z"), np.array([2.0, -1.0]), 0.0)
    s = predict(m, np.column_stack([np.linspace(-500, 500, 101), np.zeros(101)]))
    assert np.all(np.diff(s) >= 0) and s[-1] > s[0]
    assert np.all((s > 0) & (s < 1))


def test_predict_width_mismatch():
    with pytest.raises(DomainError):
        predict(LogisticModel(("x",), np.zeros(1), 0.0), [[1.0, 2.0]])


# ---------------------------------------------------------------- group-specific models

def test_single_group_matches_plain_fit():
    data = logistic_data()
    gm = fit_group_specific(data)
    plain = fit(data)
    m = gm.model_for("a")
    assert m.intercept == plain.intercept and np.array_equal(m.weights, plain.weights)
    assert not gm.fallback


def test_interaction_favors_group_models():
    # the feature's effect flips sign between groups, which a pooled model cannot express
    rng = np.random.default_rng(17)
    n = 6000
    g = np.where(rng.random(n) < 0.5, "a", "b").astype(object)
    x = rng.normal(size=n)
    eta = np.where(g == "a", -0.5 + 1.5 * x, -0.5 - 1.5 * x)
    y = (rng.random(n) < special.expit(eta)).astype(np.int8)
    X = np.column_stack([x, (g == "b").astype(float)])
    data = Dataset(X, y, g, ("x", "group=b"), np.array([False, True]))
    train, test = data.subset(np.arange(n) < 4000), data.subset(np.arange(n) >= 4000)
    gm = fit_group_specific(train)
    pooled = log_likelihood(gm.pooled, test.unprotected())
    grouped = sum(log_likelihood(gm.model_for(k), test.subset(test.groups == k).unprotected())
                  * (test.groups == k).sum() for k in ("a", "b")) / len(test)
    assert grouped > pooled
    # the recovered slopes have the generating signs
    assert gm.model_for("a").weights[0] > 1.0 and gm.model_for("b").weights[0] < -1.0


def test_single_class_group_falls_back_to_pooled():
    data = logistic_data(n=300)
    groups = np.array(["a"] * 290 + ["b"] * 10, dtype=object)
    y = data.y.copy()
    y[290:] = 0
    data = Dataset(data.X, y, groups, data.feature_names, data.protected_mask)
    gm = fit_group_specific(data)
    assert gm.fallback == frozenset({"b"})
    assert gm.model_for("b").fallback
    assert np.array_equal(gm.model_for("b").weights, gm.pooled.weights)
    assert gm.to_dict()["fallback"] == ["b"]


def test_gender_blind_score_overstates_risk_for_women():
    data = synthetic_gender_data()
    blind = data.unprotected()
    pop = score_population(blind, fit(blind))
    edges = quantile_edges(pop.pooled().scores, 5)
    male, female = calibration_curve(pop["male"], edges), calibration_curve(pop["female"], edges)
    diffs = [m.positive_rate - f.positive_rate for m, f in zip(male.bins, female.bins)
             if m.weight > 50 and f.weight > 50]
    assert len(diffs) >= 3 and all(d > 0 for d in diffs)


def test_score_population_and_distributions():
    data = logistic_data(groups=np.array(["x", "y"] * 200, dtype=object))
    pop = score_population(data, fit(data))
    assert set(pop) == {"x", "y"} and len(pop["x"].scores) == 200
    dists = risk_distributions(pop)
    assert abs(dists["x"].mean - pop["x"].scores.mean()) < 1e-12


def test_cross_validate_picks_from_grid():
    data = logistic_data(n=300)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        cfg, scores = cross_validate(data, grid=((1e-3, 1e-3), (1.0, 0.0)), folds=3)
    # the fully penalized model ignores an informative feature and must lose
    assert (cfg.l1, cfg.l2) == (1e-3, 1e-3)
    assert scores[(1e-3, 1e-3)] > scores[(1.0, 0.0)]
