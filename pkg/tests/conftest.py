import numpy as np
import pytest

from evsel.spectral import FeatureBank, LabelMatrix, build_basis


@pytest.fixture
def identity_case():
    """X = I_2, y = [1, 0]."""
    bank = FeatureBank("eye", np.eye(2))
    labels = LabelMatrix(np.array([[1], [0]]))
    return bank, labels, build_basis(bank, labels)


@pytest.fixture
def repeated_case():
    """Columns e1, e1, e2 with y = [1, 1, 0]: s = [2, 1], h = [2, 0], y^T y = 2."""
    bank = FeatureBank("e1e1e2", np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
    labels = LabelMatrix(np.array([[1], [1], [0]]))
    return bank, labels, build_basis(bank, labels)
