import sys

import numpy as np
import pandas as pd
import pytest
import torch

from utils.misc_util import (EasyDict, Logger, config_hash, construct_class_by_name, find_latest_model_path,
                             to_plain)
from utils.training_util import add_dict_to, assert_shape, write_csv


def test_easy_dict_attribute_access():
    args = EasyDict({"seed": 3, "scenario": {"num_users": 2}})
    args.scheme = "noma"
    assert args["scheme"] == "noma" and args.seed == 3
    assert type(args.scenario) is dict
    with pytest.raises(AttributeError):
        args.missing


def test_construct_optimizer_by_name():
    params = [torch.nn.Parameter(torch.zeros(2))]
    opt = construct_class_by_name(params, class_name="torch.optim.SGD", lr=0.1)
    assert isinstance(opt, torch.optim.SGD)
    with pytest.raises(ImportError):
        construct_class_by_name(params, class_name="torch.optim.NoSuchOptimizer", lr=0.1)


def test_latest_checkpoint_is_numeric_max(tmp_path):
    assert find_latest_model_path(str(tmp_path / "missing"), prefix="episode_") is None
    for e in (9, 10, 2):
        (tmp_path / f"episode_{e}").mkdir()
    (tmp_path / "episode_final").mkdir()
    assert find_latest_model_path(str(tmp_path), prefix="episode_") == str(tmp_path / "episode_10")


def test_config_hash_ignores_key_order_and_container_type():
    a = config_hash({"x": 1, "y": (1.0, 2.0)}, {"mode": "rsma"})
    b = config_hash({"y": [1.0, 2.0], "x": 1}, EasyDict(mode="rsma"))
    assert a == b and len(a) == 12
    assert config_hash({"x": 2}) != config_hash({"x": 1})
    assert to_plain(EasyDict(a=(1, {"b": (2, )}))) == {"a": [1, {"b": [2]}]}


def test_logger_tees_and_restores(tmp_path, capsys):
    stdout = sys.stdout
    with Logger(str(tmp_path / "log.txt")):
        print("[episode 00001] reward: 1.0")
    assert sys.stdout is stdout
    assert (tmp_path / "log.txt").read_text() == "[episode 00001] reward: 1.0\n"
    assert "reward: 1.0" in capsys.readouterr().out


def test_add_dict_to_accumulates():
    total = {}
    add_dict_to(total, {"loss": 1.0})
    add_dict_to(total, {"loss": 0.5, "ratio": 1.0})
    assert total == {"loss": 1.5, "ratio": 1.0}


def test_assert_shape_wildcard():
    assert_shape(np.zeros((4, 3)), (4, None))
    with pytest.raises(AssertionError):
        assert_shape(np.zeros((4, 3)), (4, 2))


def test_write_csv_fixed_columns(tmp_path):
    path = tmp_path / "rows.csv"
    write_csv([{"b": 0.1 + 0.2, "a": 1}], path, ["a", "b", "c"])
    assert path.read_text() == "a,b,c\n1,0.3,\n"
    assert list(pd.read_csv(path).columns) == ["a", "b", "c"]
