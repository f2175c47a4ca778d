import numpy as np
import pytest

from cqcim import fileio  # primary toolkit: the loading side of the round trip
from cqexport import HashEncoder, cosine_matrix
from cqexport.cli import main
from cqexport.encoder import EncoderLoadError, load_encoder
from cqexport.job import ExportJob, run_export


FIXTURE = [
    "compute in memory arrays accumulate analog dot products",
    "learned thresholds reshape embeddings before quantization",
    "retrieval quality is measured with ndcg over ranked documents",
]


@pytest.fixture
def texts(tmp_path):
    path = tmp_path / "texts.txt"
    path.write_text("\n".join(FIXTURE) + "\n")
    return path


def test_single_export_header_and_payload(texts, tmp_path):
    out = tmp_path / "emb.cqem"
    assert main(["export", "--model", "hash-48", "--in", str(texts),
                 "--out", str(out), "--seed", "7"]) == 0
    emb, ids = fileio.read_embeddings(out)
    assert emb.shape == (3, 48) and ids is None
    np.testing.assert_allclose(np.linalg.norm(emb, axis=1), 1.0, atol=1e-6)


def test_blank_lines_are_skipped(tmp_path):
    path = tmp_path / "texts.txt"
    path.write_text("alpha beta\n\n   \ngamma delta\n")
    out = tmp_path / "emb.cqem"
    assert main(["export", "--model", "hash-16", "--in", str(path),
                 "--out", str(out)]) == 0
    emb, _ = fileio.read_embeddings(out)
    assert emb.shape[0] == 2


def test_empty_input_exit_code(tmp_path):
    path = tmp_path / "empty.txt"
    path.write_text("\n  \n")
    assert main(["export", "--model", "hash-16", "--in", str(path),
                 "--out", str(tmp_path / "x.cqem")]) == 3


def test_bad_model_exit_code(texts, tmp_path):
    assert main(["export", "--model", "hash-abc", "--in", str(texts),
                 "--out", str(tmp_path / "x.cqem")]) == 2


def test_load_encoder_rejects_bad_spec():
    with pytest.raises(EncoderLoadError):
        load_encoder("hash-0")


def test_export_is_deterministic(texts, tmp_path):
    outs = []
    for name in ("a.cqpv", "b.cqpv"):
        out = tmp_path / name
        assert main(["export", "--model", "hash-32", "--in", str(texts),
                     "--out", str(out), "--views", "paired", "--seed", "11",
                     "--negative"]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


@pytest.mark.filterwarnings("ignore:paired export without active dropout")
def test_paired_views_identical_without_dropout(texts, tmp_path):
    out = tmp_path / "views.cqpv"
    assert main(["export", "--model", "hash-32", "--in", str(texts),
                 "--out", str(out), "--views", "paired", "--seed", "3",
                 "--no-dropout"]) == 0
    batch = fileio.read_paired_views(out)
    np.testing.assert_array_equal(batch.anchor, batch.positive)
    assert batch.negative is None


def test_positive_pairs_beat_cross_sentence_similarity(texts, tmp_path):
    out = tmp_path / "views.cqpv"
    assert main(["export", "--model", "hash-64", "--in", str(texts),
                 "--out", str(out), "--views", "paired", "--seed", "5"]) == 0
    batch = fileio.read_paired_views(out)
    sims = cosine_matrix(batch.anchor, batch.positive)
    n = sims.shape[0]
    cross_mean = (sims.sum() - np.trace(sims)) / (n * n - n)
    assert np.all(np.diag(sims) > cross_mean)


def test_negative_view_uses_higher_dropout(texts, tmp_path):
    out = tmp_path / "views.cqpv"
    run_export(ExportJob(model="hash-64", input_path=str(texts),
                         output_path=str(out), views="paired",
                         with_negative=True, seed=9))
    batch = fileio.read_paired_views(out)
    pos_sim = np.diag(cosine_matrix(batch.anchor, batch.positive)).mean()
    neg_sim = np.diag(cosine_matrix(batch.anchor, batch.negative)).mean()
    assert neg_sim < pos_sim


def test_paired_without_dropout_warns(texts, tmp_path):
    with pytest.warns(UserWarning, match="identical views"):
        ExportJob(model="hash-16", input_path=str(texts),
                  output_path=str(tmp_path / "x.cqpv"), views="paired",
                  dropout_active=False)


@pytest.mark.filterwarnings("ignore:paired export without active dropout")
def test_acceptance_exporter_round_trip(texts, tmp_path):
    """Release criterion for the export client, printed as one line."""
    out = tmp_path / "fixture.cqpv"
    code = main(["export", "--model", "hash-64", "--in", str(texts),
                 "--out", str(out), "--views", "paired", "--seed", "21"])

    # native reference: same encoder, same seed and draw order
    encoder = HashEncoder(64)
    rng = np.random.default_rng(21)
    anchor = encoder.encode(FIXTURE, dropout_rate=0.05, rng=rng)
    positive = encoder.encode(FIXTURE, dropout_rate=0.05, rng=rng)
    native = cosine_matrix(anchor, positive)

    batch = fileio.read_paired_views(out)  # primary-side header/length checks
    loaded = cosine_matrix(batch.anchor, batch.positive)
    worst = float(np.max(np.abs(native - loaded)))

    quiet = tmp_path / "quiet.cqpv"
    main(["export", "--model", "hash-64", "--in", str(texts), "--out",
          str(quiet), "--views", "paired", "--seed", "4", "--no-dropout"])
    qb = fileio.read_paired_views(quiet)
    identical = bool(np.array_equal(qb.anchor, qb.positive))

    ok = (code == 0 and batch.anchor.shape == (3, 64)
          and worst <= 1e-6 and identical)
    print(f"[{'PASS' if ok else 'FAIL'}] exporter-round-trip  "
          f"(cosine err {worst:.2e}, dropout-off views identical: {identical})")
    assert ok
