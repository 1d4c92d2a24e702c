import json

import pytest
from hypothesis import given, strategies as st

from sheetstream.model import ModelError, dump_model, load_model, validate

MINIMAL = """
{
  "streams": [{"name": "quotes",
               "attrs": [{"name": "sym", "type": "text"}, {"name": "price", "type": "number"}]}],
  "bindings": [{"stream": "quotes", "kind": "latest", "region": "A1:B1",
                "projection": ["sym", "price"]}],
  "cells": [{"addr": "C1", "formula": "=B1*2"}],
  "exports": [{"addr": "C1", "name": "double"}]
}
"""


def diag_text(err: ModelError) -> str:
    return "\n".join(str(d) for d in err.diagnostics)


def load_err(doc) -> str:
    with pytest.raises(ModelError) as exc:
        load_model(doc if isinstance(doc, str) else json.dumps(doc))
    return diag_text(exc.value)


def test_minimal_document():
    m = load_model(MINIMAL)
    assert len(m.streams) == 1 and len(m.bindings) == 1 and len(m.exports) == 1
    assert not m.partitioned
    assert validate(m) == []


def test_self_reference_loads_fine():
    # cycles are the engine's concern, not the loader's
    doc = {"cells": [{"addr": "G3", "formula": "=G3+1"}]}
    m = load_model(json.dumps(doc))
    assert len(m.cells) == 1


def test_overlapping_bindings_rejected():
    doc = {
        "streams": [{"name": "trades", "attrs": [{"name": "a", "type": "number"},
                                                 {"name": "b", "type": "number"}]}],
        "bindings": [
            {"stream": "trades", "kind": "scroll", "region": "A1:B5", "rows": 5, "projection": ["a", "b"]},
            {"stream": "trades", "kind": "latest", "region": "A3:B3", "projection": ["a", "b"]},
        ],
    }
    assert "overlapping bindings" in load_err(doc)


def test_partition_agreement_missing_stream():
    doc = {
        "streams": [
            {"name": "trades", "attrs": [{"name": "sym", "type": "text"}], "partition_by": "sym"},
            {"name": "quotes", "attrs": [{"name": "sym", "type": "text"}]},
        ]
    }
    msg = load_err(doc)
    assert "partition key agreement" in msg and "all streams must declare partition_by" in msg
    assert "quotes" in msg


def test_partition_key_types_differ():
    doc = {
        "streams": [
            {"name": "trades", "attrs": [{"name": "sym", "type": "text"}], "partition_by": "sym"},
            {"name": "quotes", "attrs": [{"name": "region_id", "type": "number"}],
             "partition_by": "region_id"},
        ]
    }
    assert "partition key types differ" in load_err(doc)


def test_vwap_fixture_is_clean(vwap_model_path):
    m = load_model(vwap_model_path.read_text())
    assert validate(m) == []
    assert len(m.cells) == 6 and len(m.exports) == 2


def test_unknown_top_level_key_is_strict():
    assert "unknown key" in load_err({"streams": [], "charts": []})


def test_unknown_nested_key_is_strict():
    doc = {"cells": [{"addr": "A1", "formula": "=1", "color": "red"}]}
    assert "unknown key" in load_err(doc)


def test_formula_must_start_with_equals():
    assert "start with '='" in load_err({"cells": [{"addr": "A1", "formula": "1+1"}]})


def test_formula_syntax_error_located():
    msg = load_err({"cells": [{"addr": "A1", "formula": "=1+"}]})
    assert "cells[A1]" in msg and "expected expression" in msg


def test_unknown_stream_in_binding():
    doc = {"bindings": [{"stream": "ghost", "kind": "latest", "region": "A1:A1", "projection": ["x"]}]}
    assert "unknown stream" in load_err(doc)


def test_duplicate_cells_rejected():
    doc = {"cells": [{"addr": "A1", "formula": "=1"}, {"addr": "A1", "formula": "=2"}]}
    assert "duplicate cell definition" in load_err(doc)


def test_duplicate_export_names_rejected():
    doc = {
        "cells": [{"addr": "A1", "formula": "=1"}, {"addr": "A2", "formula": "=2"}],
        "exports": [{"addr": "A1", "name": "x"}, {"addr": "A2", "name": "x"}],
    }
    assert "duplicate export name" in load_err(doc)


def test_export_must_point_somewhere():
    doc = {"exports": [{"addr": "Q9", "name": "x"}]}
    assert "neither a formula cell nor stream-bound" in load_err(doc)


def test_export_of_window_cell_rejected():
    doc = {
        "streams": [{"name": "t", "attrs": [{"name": "p", "type": "number"},
                                            {"name": "ts", "type": "timestamp"}], "ts_attr": "ts"}],
        "cells": [{"addr": "A1", "formula": "=WINDOW(t.p,1000)"}],
        "exports": [{"addr": "A1", "name": "w"}],
    }
    assert "cannot be exported" in load_err(doc)


def test_bound_export_is_fine():
    doc = {
        "streams": [{"name": "t", "attrs": [{"name": "p", "type": "number"}]}],
        "bindings": [{"stream": "t", "kind": "latest", "region": "A1:A1", "projection": ["p"]}],
        "exports": [{"addr": "A1", "name": "p_latest"}],
    }
    m = load_model(json.dumps(doc))
    assert m.exports[0].out_name == "p_latest"


def test_ts_attr_must_be_timestamp_typed():
    doc = {"streams": [{"name": "t", "attrs": [{"name": "p", "type": "number"}], "ts_attr": "p"}]}
    assert "must have type timestamp" in load_err(doc)


def test_select_value_type_must_match():
    doc = {"streams": [{"name": "t", "attrs": [{"name": "sym", "type": "text"}],
                        "select": {"attr": "sym", "value": 7}}]}
    assert "does not match attr type" in load_err(doc)


def test_select_and_partition_are_exclusive():
    doc = {"streams": [{"name": "t", "attrs": [{"name": "sym", "type": "text"}],
                        "select": {"attr": "sym", "value": "A"}, "partition_by": "sym"}]}
    assert "not both" in load_err(doc)


def test_scroll_region_height_must_equal_rows():
    doc = {
        "streams": [{"name": "t", "attrs": [{"name": "p", "type": "number"}]}],
        "bindings": [{"stream": "t", "kind": "scroll", "region": "A1:A5", "rows": 3, "projection": ["p"]}],
    }
    assert "height 5 != rows 3" in load_err(doc)


def test_latest_region_must_be_one_row():
    doc = {
        "streams": [{"name": "t", "attrs": [{"name": "p", "type": "number"}]}],
        "bindings": [{"stream": "t", "kind": "latest", "region": "A1:A2", "projection": ["p"]}],
    }
    assert "one row high" in load_err(doc)


def test_region_width_must_match_projection():
    doc = {
        "streams": [{"name": "t", "attrs": [{"name": "p", "type": "number"}]}],
        "bindings": [{"stream": "t", "kind": "latest", "region": "A1:B1", "projection": ["p"]}],
    }
    assert "width 2 != projection length 1" in load_err(doc)


def test_formula_cell_inside_region_rejected():
    doc = {
        "streams": [{"name": "t", "attrs": [{"name": "p", "type": "number"}]}],
        "bindings": [{"stream": "t", "kind": "scroll", "region": "A1:A5", "rows": 5, "projection": ["p"]}],
        "cells": [{"addr": "A3", "formula": "=1"}],
    }
    assert "inside bound region" in load_err(doc)


def test_window_over_text_attr_rejected():
    doc = {
        "streams": [{"name": "t", "attrs": [{"name": "sym", "type": "text"},
                                            {"name": "ts", "type": "timestamp"}], "ts_attr": "ts"}],
        "cells": [{"addr": "A1", "formula": "=WINDOW(t.sym,1000)"}],
    }
    assert "must be number-typed" in load_err(doc)


def test_window_span_must_be_positive_integer_literal():
    base = {
        "streams": [{"name": "t", "attrs": [{"name": "p", "type": "number"},
                                            {"name": "ts", "type": "timestamp"}], "ts_attr": "ts"}]
    }
    for span in ["0", "-5", "2.5", "B1"]:
        doc = dict(base, cells=[{"addr": "A1", "formula": f"=WINDOW(t.p,{span})"}])
        assert "span" in load_err(doc)


def test_dangling_cell_references_are_allowed():
    # unbound, undefined cells read Blank at runtime; not a validation error
    doc = {"cells": [{"addr": "A1", "formula": "=Z99+1"}]}
    m = load_model(json.dumps(doc))
    assert validate(m) == []


def test_json_syntax_error_is_a_diagnostic():
    msg = load_err("{not json")
    assert "line 1" in msg


@pytest.mark.parametrize("fixture", ["vwap.sheet.json", "vwap_window.sheet.json", "vwap_partition.sheet.json"])
def test_dump_load_roundtrip(fixtures_dir, fixture):
    m = load_model((fixtures_dir / fixture).read_text())
    again = load_model(dump_model(m))
    assert again == m


@given(st.text(max_size=60))
def test_load_total_on_arbitrary_text(text):
    try:
        load_model(text)
    except ModelError:
        pass


@given(st.binary(max_size=60))
def test_load_total_on_bytes(data):
    try:
        load_model(data.decode("utf-8", errors="replace"))
    except ModelError:
        pass


_json_doc = st.recursive(
    st.one_of(st.none(), st.booleans(), st.integers(), st.floats(allow_nan=False), st.text(max_size=6)),
    lambda kids: st.one_of(
        st.lists(kids, max_size=3),
        st.dictionaries(st.sampled_from(["streams", "bindings", "cells", "exports", "name",
                                         "attrs", "type", "addr", "formula", "region", "rows",
                                         "kind", "projection", "select", "value", "x"]), kids, max_size=4),
    ),
    max_leaves=12,
)


@given(_json_doc)
def test_load_total_on_json_shaped_documents(doc):
    try:
        load_model(json.dumps(doc))
    except ModelError:
        pass
