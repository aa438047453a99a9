import itertools
import textwrap

import pytest

from lightrocks.dsl import parse
from lightrocks.model import (
    ACTION, CODES, LEGAL_SHAPES, SKILL, TASK, Level, Reference, SymbolTable, effective,
    endpoint_shape_legal, resolve_names, validate,
)


def check(src, profile="standard", table=None):
    model, diags = parse(textwrap.dedent(src))
    assert not diags
    if table is None:
        table, more = resolve_names(model)
        assert not more
    return validate(model, table, profile)


def errors(diags):
    return [d for d in diags if d.is_error]


GOOD_SKILL = """
skill S {
  start s0;
  end done;
  action A { start a; end b; exec tool.release(); }
  on self.s0 -> A.a;
  on A.b -> self.done;
}
"""


def test_levels():
    assert (TASK.value, SKILL.value, ACTION.value) == (2, 1, 0)
    assert Level("component", 7).value == 7
    assert not Level("component", 2).standard


def test_valid_skill_has_no_diagnostics():
    assert check(GOOD_SKILL) == []


def test_missing_end_port():
    diags = check("""
    skill S {
      start s0;
      action A { start a; end b; exec tool.release(); }
      on self.s0 -> A.a;
    }
    """)
    assert [(d.code, d.message) for d in errors(diags)] == [
        ("E001", "component must declare at least one end condition")]


def test_exec_on_composite():
    diags = check(GOOD_SKILL.replace("on self.s0", "exec tool.grip();\n  on self.s0"))
    assert [(d.code, d.message) for d in diags] == [("E003", "exec forbidden on composite")]


def test_child_end_to_self_start_is_illegal():
    diags = check(GOOD_SKILL.replace("on A.b -> self.done;", "on A.b -> self.done;\n  on A.b -> self.s0;"))
    assert [d.code for d in diags] == ["E005"]


def test_exactly_three_endpoint_shapes_are_legal():
    owners, kinds = ("self", "child"), ("start", "end")
    combos = list(itertools.product(owners, kinds, owners, kinds))
    legal = {c for c in combos if endpoint_shape_legal(*c)}
    # hand-listed: enter a child from our start, chain children, leave via our end
    assert legal == {
        ("self", "start", "child", "start"),
        ("child", "end", "child", "start"),
        ("child", "end", "self", "end"),
    }
    assert len(LEGAL_SHAPES) == 3


def test_standard_profile_requires_exact_level_step():
    src = """
    task T {
      start s0;
      end done;
      action A { start a; end b; exec tool.release(); }
      on self.s0 -> A.a;
      on A.b -> self.done;
    }
    """
    assert [d.code for d in check(src)] == ["E012"]
    assert check(src, profile="generic") == []


def test_generic_levels_need_strict_decrease():
    src = """
    component 4 Cell {
      start s;
      end e;
      component 4 Inner {
        start s;
        end e;
        action A { start a; end b; exec tool.release(); }
        on self.s -> A.a;
        on A.b -> self.e;
      }
      on self.s -> Inner.s;
      on Inner.e -> self.e;
    }
    """
    assert [d.code for d in check(src, "generic")] == ["E012"]
    assert check(src.replace("component 4 Inner", "component 1 Inner"), "generic") == []


def test_unconnected_port_is_only_a_warning():
    diags = check(GOOD_SKILL.replace("end done;", "end done;\n  end spare;"))
    assert [(d.code, d.severity) for d in diags] == [("W002", "warning")]


def test_update_binding_needs_object_and_attribute():
    src = """
    action L { start a; end b; exec perception.localize(object = "screw") yields screw := result.pose; }
    """
    assert [d.code for d in check(src)] == ["E018"]


def test_binding_may_reference_enclosing_parameter():
    src = """
    skill S(string obj = "screw") {
      start s0;
      end done;
      action L(string target = "x") {
        start a;
        end b;
        exec perception.localize(object = target);
      }
      on self.s0 -> L.a set target = obj;
      on L.b -> self.done;
    }
    """
    assert check(src) == []
    assert [d.code for d in check(src.replace("set target = obj", "set target = other"))] == ["E019"]


def test_diagnostics_sorted_and_codes_documented():
    src = """
    action B { start a; end a; }
    action A(num x = "s") { end b; exec tool.grip(); }
    """
    diags = check(src)
    keys = [d.sort_key() for d in diags]
    assert keys == sorted(keys)
    assert {d.code for d in diags} <= set(CODES)


def test_resolve_single_file():
    model, _ = parse("task T { start s; end e; uses S as s1; on self.s -> s1.a; on s1.b -> self.e; }\n"
                     "skill S { start a; end b; action X { start p; end q; exec tool.grip(); }"
                     " on self.a -> X.p; on X.q -> self.b; }")
    table, diags = resolve_names(model)
    assert diags == [] and sorted(table) == ["S", "T"]


def test_qualified_reference_uses_search_path(tmp_path):
    lib_dir = tmp_path / "libs"
    lib_dir.mkdir()
    (lib_dir / "lib.lr").write_text(
        "skill Grasp { start a; end b; action X { start p; end q; exec tool.grip(); }"
        " on self.a -> X.p; on X.q -> self.b; }\n")
    main = tmp_path / "main.lr"
    main.write_text("task T { start s; end e; uses lib.Grasp as g; on self.s -> g.a; on g.b -> self.e; }\n")
    from lightrocks.dsl import parse_file
    model, _ = parse_file(main)
    table, diags = resolve_names(model)
    assert [d.code for d in diags] == ["E011"]
    table, diags = resolve_names(model, [lib_dir])
    assert diags == []
    assert table["lib.Grasp"].children[0].name == "X"
    assert validate(model, table) == []


def test_use_import_duplicates_are_reported(tmp_path):
    body = ("skill Grasp { start a; end b; action X { start p; end q; exec tool.grip(); }"
            " on self.a -> X.p; on X.q -> self.b; }\n")
    (tmp_path / "one.lr").write_text(body)
    (tmp_path / "two.lr").write_text(body)
    main = tmp_path / "main.lr"
    main.write_text('use "one.lr";\nuse "two.lr";\n')
    from lightrocks.dsl import parse_file
    model, _ = parse_file(main)
    _, diags = resolve_names(model)
    assert [d.code for d in diags] == ["E010"]


def test_effective_merges_base_first():
    model, _ = parse("""
    skill Grasp(num force = 5.0) { start a; end b; action X { start p; end q; exec tool.grip(); }
      on self.a -> X.p; on X.q -> self.b; }
    skill Fine(num force = 2.0) extends Grasp { start c; on self.c -> X.p; }
    """)
    table = SymbolTable({c.name: c for c in model})
    view = effective(table["Fine"], table)
    assert [p.name for p in view.starts] == ["a", "c"]
    assert view.param("force").default.value == 2.0
    assert len(view.transitions) == 3
    with pytest.raises(KeyError):
        effective(model.components[1], SymbolTable())


def test_reference_node_alias():
    r = Reference("lib.Grasp", "g")
    assert r.alias == "g"
