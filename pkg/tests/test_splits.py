import itertools
import json

import pytest

from nervetrace.errors import ParamError
from nervetrace.splits import (
    Fold,
    SplitSpec,
    _largest_remainder,
    read_splits,
    stratified_kfold,
    write_splits,
)
from nervetrace.store import PatientMeta, VideoRecord


def make_video(vid, side="left", gain="low", sex="male", plexus="scbp"):
    patient = PatientMeta(age=30, sex=sex, height=175, bmi=23.0)
    return VideoRecord(id=vid, machine="esaote", plexus=plexus, side=side,
                       gain=gain, depth_setting="", width=256, height=256,
                       n_frames=10, eval_resolution=(256, 256), patient=patient)


def balanced_manifest(n=100):
    """Videos spread evenly over side x gain x sex (12 strata)."""
    combos = list(itertools.product(("left", "right"),
                                    ("low", "medium", "high"),
                                    ("male", "female")))
    return [make_video(f"v{i:03}", side=c[0], gain=c[1], sex=c[2])
            for i, c in zip(range(n), itertools.cycle(combos))]


class TestLargestRemainder:
    def test_exact_quotas_pass_through(self):
        assert _largest_remainder([2.0, 3.0, 5.0], 10) == [2, 3, 5]

    def test_fractional_seats_go_to_largest_remainders(self):
        assert _largest_remainder([1.4, 1.4, 1.2], 4) == [2, 1, 1]

    def test_total_honored_within_contract(self):
        # callers ask for totals between sum(floors) and sum(floors) + n,
        # since every fractional remainder is below one
        for total in range(3, 7):
            assert sum(_largest_remainder([0.7, 2.3, 1.9], total)) == total


class TestSpec:
    def test_defaults(self):
        spec = SplitSpec()
        assert spec.k == 5
        assert spec.proportions == (61, 19, 20)

    def test_validation(self):
        with pytest.raises(ParamError):
            SplitSpec(k=1)
        with pytest.raises(ParamError):
            SplitSpec(proportions=(60, 20, 30))


class TestStratifiedKfold:
    def test_every_video_tests_exactly_once(self):
        videos = balanced_manifest()
        folds = stratified_kfold(videos, SplitSpec(seed=3))
        tested = [vid for f in folds for vid in f.test]
        assert sorted(tested) == sorted(v.id for v in videos)

    def test_fold_partitions_are_disjoint_and_complete(self):
        videos = balanced_manifest()
        for fold in stratified_kfold(videos, SplitSpec(seed=3)):
            ids = list(fold.train) + list(fold.val) + list(fold.test)
            assert sorted(ids) == sorted(v.id for v in videos)
            assert len(set(ids)) == len(ids)

    def test_global_proportions_within_one(self):
        videos = balanced_manifest()
        for fold in stratified_kfold(videos, SplitSpec(seed=3)):
            assert abs(len(fold.train) - 61) <= 1
            assert abs(len(fold.val) - 19) <= 1
            assert abs(len(fold.test) - 20) <= 1

    def test_per_stratum_test_counts_within_one(self):
        videos = balanced_manifest(96)  # 8 per stratum
        by_stratum = {}
        for v in videos:
            key = (v.side, v.gain, v.patient.sex)
            by_stratum.setdefault(key, set()).add(v.id)
        for fold in stratified_kfold(videos, SplitSpec(seed=9)):
            for key, members in by_stratum.items():
                got = len(members & set(fold.test))
                assert abs(got - len(members) / 5) <= 1

    def test_deterministic_per_seed(self):
        videos = balanced_manifest()
        a = stratified_kfold(videos, SplitSpec(seed=5))
        b = stratified_kfold(videos, SplitSpec(seed=5))
        assert a == b
        c = stratified_kfold(videos, SplitSpec(seed=6))
        assert a != c

    def test_order_of_input_does_not_matter(self):
        videos = balanced_manifest()
        a = stratified_kfold(videos, SplitSpec(seed=5))
        b = stratified_kfold(videos[::-1], SplitSpec(seed=5))
        assert [f.to_json() for f in a] == [f.to_json() for f in b]

    def test_structure_free_videos_always_train(self):
        videos = balanced_manifest(60)
        extras = [make_video(f"neg{i}", plexus="none") for i in range(6)]
        folds = stratified_kfold(videos + extras, SplitSpec(seed=1))
        for fold in folds:
            for vid in ("neg0", "neg1", "neg2", "neg3", "neg4", "neg5"):
                assert vid in fold.train
                assert vid not in fold.val and vid not in fold.test

    def test_small_strata_fall_back_with_warning(self):
        # one lone female video makes the finest stratification infeasible
        videos = [make_video(f"m{i}", sex="male") for i in range(12)]
        videos.append(make_video("f0", sex="female"))
        with pytest.warns(UserWarning, match="too small"):
            folds = stratified_kfold(videos, SplitSpec(seed=2))
        tested = sorted(vid for f in folds for vid in f.test)
        assert tested == sorted(v.id for v in videos)

    def test_coarse_spec_skips_finer_levels(self):
        videos = balanced_manifest(30)
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            folds = stratified_kfold(
                videos, SplitSpec(strata_keys=("side",), seed=0))
        assert len(folds) == 5


class TestSplitsFile:
    def test_round_trip(self, tmp_path):
        videos = balanced_manifest(60)
        folds = stratified_kfold(videos, SplitSpec(seed=4))
        path = tmp_path / "splits.json"
        write_splits(folds, 4, path)
        seed, loaded = read_splits(path)
        assert seed == 4
        assert [f.to_json() for f in loaded] == [f.to_json() for f in folds]

    def test_file_shape(self, tmp_path):
        folds = [Fold(train=("b", "a"), val=("c",), test=("d",))]
        path = tmp_path / "splits.json"
        write_splits(folds, 7, path)
        payload = json.loads(path.read_text())
        assert set(payload) == {"seed", "folds"}
        assert payload["folds"][0]["train"] == ["a", "b"]  # sorted on disk

    def test_regeneration_is_byte_identical(self, tmp_path):
        videos = balanced_manifest()
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        write_splits(stratified_kfold(videos, SplitSpec(seed=8)), 8, a)
        write_splits(stratified_kfold(videos, SplitSpec(seed=8)), 8, b)
        assert a.read_bytes() == b.read_bytes()
