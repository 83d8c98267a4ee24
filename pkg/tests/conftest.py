import dataclasses
import math

import pytest

from cateforge import datagen as dg


@pytest.fixture(scope="session")
def default_spec():
    return dg.default_spec()


def make_spec(**overrides) -> dg.GeneratorSpec:
    """Default spec with field overrides, for targeted scenarios."""
    return dataclasses.replace(dg.default_spec(), **overrides)


def silent_symptom_spec(b0: float = math.log(3.0), b1: float = math.log(2.0)):
    """Spec whose symptoms are (effectively) never present.

    With intercepts of -60 every symptom probability is ~1e-26, so any
    realistically sized sample has all-zero symptom rows and the outcome
    means reduce to the arm intercepts.
    """
    symptoms = {
        name: dg.BernoulliCpd(name, -60.0) for name in dg.SYMPTOMS
    }
    zero = {name: 0.0 for name in dg.SYMPTOMS}
    return make_spec(
        symptom_cpds=symptoms,
        outcome_control=dg.OutcomeParams(b0, dict(zero)),
        outcome_treated=dg.OutcomeParams(b1, dict(zero)),
    )
