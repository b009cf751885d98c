import logging
import timeit

COUNT = 20

benchmark_results = []
benchmark_registry = {}


def register_benchmark(testname):
    def _wrap(func):
        benchmark_registry[testname] = func
        return func

    return _wrap


def results_new_benchmark(name: str) -> None:
    benchmark_results.append((name, {}))
    print(name)


def results_record_result(callback, count):
    callback_name = callback.__name__
    bench_name = callback_name.split('_', 1)[-1]
    try:
        results = timeit.repeat(callback, repeat=10, number=count)
    except Exception:
        logging.exception(f"error running {bench_name}")
        return

    result = count / min(results)
    benchmark_results.append((bench_name, str(result)))
    print(f"{bench_name}: {result:,.02f} calls/sec")


# =============================================================================
# Setup
# =============================================================================

from taxoseg.cli.runner import WorkerPool
from taxoseg.gridio import ProbMap
from taxoseg.gridio import plan_tiles
from taxoseg.hierinfer import TtaView
from taxoseg.hierinfer import aggregate_to_nodes
from taxoseg.hierinfer import apply_tta_transform
from taxoseg.hierinfer import flat_argmax
from taxoseg.hierinfer import fuse_tta
from taxoseg.hierinfer import hierarchical_argmax
from taxoseg.hierinfer import predict
from taxoseg.hierinfer import store_prediction
from taxoseg.metrics import evaluate
from taxoseg.synthfield import FieldSpec
from taxoseg.synthfield import generate_field
from taxoseg.taxonomy import load_bundled_taxonomy

TREE = load_bundled_taxonomy('species')
SPEC = FieldSpec(
    seed=7,
    height=512,
    width=512,
    flip_prob=0.2,
    blobs=(),
)
PROB_MAP, MASK = generate_field(SPEC, TREE)
PLAN = plan_tiles(512, 512, 256, 32)
VIEWS = [TtaView(PROB_MAP)] + [
    TtaView(ProbMap(apply_tta_transform(PROB_MAP.data, t)), t) for t in ('hflip', 'vflip', 'rot90')
]
PREDICTION = predict(PROB_MAP, TREE)


# =============================================================================
# Inference
# =============================================================================

@register_benchmark("hierarchical_argmax")
def bench_hierarchical_argmax():
    hierarchical_argmax(aggregate_to_nodes(PROB_MAP, TREE), TREE)


@register_benchmark("flat_argmax")
def bench_flat_argmax():
    flat_argmax(PROB_MAP, TREE)


@register_benchmark("tiled_predict")
def bench_tiled_predict():
    predict(PROB_MAP, TREE, PLAN)


@register_benchmark("fuse_tta")
def bench_fuse_tta():
    fuse_tta(VIEWS)


@register_benchmark("store_prediction")
def bench_store_prediction():
    store_prediction(PREDICTION)


# =============================================================================
# Evaluation
# =============================================================================

@register_benchmark("evaluate")
def bench_evaluate():
    evaluate([('field', PREDICTION, MASK)], TREE)


@register_benchmark("worker_pool")
def bench_worker_pool():
    WorkerPool('bench', 4).run_sync(
        ('tile{}'.format(i), lambda: predict(PROB_MAP, TREE, PLAN)) for i in range(4)
    )


# =============================================================================
# Benchmarks
# =============================================================================

def main():
    results_new_benchmark("Inference on a 512x512 species map")
    results_record_result(benchmark_registry["hierarchical_argmax"], COUNT)
    results_record_result(benchmark_registry["flat_argmax"], COUNT)
    results_record_result(benchmark_registry["tiled_predict"], COUNT)
    results_record_result(benchmark_registry["fuse_tta"], COUNT)
    results_record_result(benchmark_registry["store_prediction"], COUNT)
    print()
    results_new_benchmark("Evaluation")
    results_record_result(benchmark_registry["evaluate"], COUNT)
    results_record_result(benchmark_registry["worker_pool"], COUNT)
    print()
    print("Above metrics are in call/sec, larger is better.")


if __name__ == "__main__":
    main()
