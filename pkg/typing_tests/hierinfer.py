from __future__ import annotations
from typing import Dict
from typing import Tuple

import numpy as np
from typing_extensions import assert_type


def test_predict() -> None:
    from taxoseg.gridio import ProbMap
    from taxoseg.hierinfer import PredictionMap
    from taxoseg.hierinfer import TtaView
    from taxoseg.hierinfer import confidence_summary
    from taxoseg.hierinfer import fuse_tta
    from taxoseg.hierinfer import predict
    from taxoseg.taxonomy import load_bundled_taxonomy

    tree = load_bundled_taxonomy('vegetation')
    prob_map = ProbMap(np.full((2, 2, 2), 0.5))
    pred = predict(prob_map, tree)
    assert_type(pred, PredictionMap)
    assert_type(pred.node_at('leaf', 0, 0), str)
    assert_type(confidence_summary(pred), Dict[str, Dict[str, float]])
    assert_type(fuse_tta([TtaView(prob_map)]), Tuple[ProbMap, np.ndarray])
