"""Shared fixtures: a small mixed corpus and ready-made engines."""

from __future__ import annotations

import pytest

from alignrag.corpus import DataObject, ObjectKind, build_corpus


def make_table(oid, title, columns, rows, description=None):
    return DataObject(
        id=oid,
        kind=ObjectKind.TABLE,
        title=title,
        description=description,
        columns=tuple(columns),
        rows=tuple(tuple(r) for r in rows),
    )


def make_passage(oid, title, sentences, description=None):
    return DataObject(
        id=oid,
        kind=ObjectKind.PASSAGE,
        title=title,
        description=description,
        sentences=tuple(sentences),
    )


@pytest.fixture
def city_objects():
    return [
        make_table(
            "t1",
            "city populations",
            ["city", "pop"],
            [["paris", "2m"], ["lyon", "500k"]],
        ),
        make_table("t2", "country areas", ["country", "area"], [["france", "643"]]),
        make_passage(
            "p1",
            "paris overview",
            ["paris is the capital of france.", "lyon is smaller."],
        ),
    ]


@pytest.fixture
def city_corpus(city_objects):
    return build_corpus(city_objects)
