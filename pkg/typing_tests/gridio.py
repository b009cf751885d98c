from __future__ import annotations

import numpy as np
from typing_extensions import assert_type


def test_rescale_to_gsd() -> None:
    from taxoseg.gridio import GsdSpec
    from taxoseg.gridio import LabelMask
    from taxoseg.gridio import ProbMap
    from taxoseg.gridio import rescale_to_gsd

    spec = GsdSpec(0.5, 1.0)
    assert_type(rescale_to_gsd(ProbMap(np.ones((4, 4, 1))), spec), ProbMap)
    assert_type(rescale_to_gsd(LabelMask(np.zeros((4, 4), dtype=np.uint8)), spec), LabelMask)
    assert_type(rescale_to_gsd(np.ones((4, 4)), spec), np.ndarray)
