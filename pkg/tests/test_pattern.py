"""Pattern model, JSON DSL, validation, and canonical ordering."""

import json

import numpy as np
import pytest

from patternforge import (
    Edge,
    EdgeRef,
    Panel,
    PatternSpec,
    SchemaError,
    SemanticError,
    Stitch,
    TemplateSpec,
    TemplateSyntaxError,
    Vertex2D,
    canonicalize,
    canonicalize_template,
    parse_template,
    serialize_template,
    validate,
)
from patternforge.canonical import reverse_curvature

from oracles import random_pattern, random_template, sampled_edge_points, sampled_points_by_panel

MINIMAL_SQUARE = """
{
  "panels": {
    "sq": {
      "vertices": [[0, 0], [2, 0], [2, 2], [0, 2]],
      "edges": [
        {"endpoints": [0, 1]},
        {"endpoints": [1, 2]},
        {"endpoints": [2, 3]},
        {"endpoints": [3, 0]}
      ],
      "translation": [0, 0, 0],
      "rotation": [0, 0, 0]
    }
  }
}
"""


class TestParse:
    def test_minimal_square(self):
        t = parse_template(MINIMAL_SQUARE)
        assert len(t.pattern.panels) == 1
        assert len(t.pattern.panels[0].edges) == 4
        assert t.pattern.stitches == ()
        assert t.parameters == ()

    def test_pants_has_three_parameters(self, pants_template):
        assert len(pants_template.parameters) == 3
        assert len(pants_template.parameter_order) == 3

    def test_syntax_error_reports_position(self):
        with pytest.raises(TemplateSyntaxError) as err:
            parse_template('{"panels": {')
        assert err.value.line >= 1 and err.value.column >= 1

    def test_missing_field_is_schema_error(self):
        doc = json.loads(MINIMAL_SQUARE)
        del doc["panels"]["sq"]["translation"]
        with pytest.raises(SchemaError, match="translation"):
            parse_template(json.dumps(doc))

    def test_wrong_kind_is_schema_error(self):
        doc = json.loads(MINIMAL_SQUARE)
        doc["panels"]["sq"]["vertices"] = "nope"
        with pytest.raises(SchemaError, match="vertices"):
            parse_template(json.dumps(doc))

    def test_unknown_field_rejected(self):
        doc = json.loads(MINIMAL_SQUARE)
        doc["panels"]["sq"]["colour"] = "red"
        with pytest.raises(SchemaError, match="colour"):
            parse_template(json.dumps(doc))

    def test_open_loop_names_panel(self):
        doc = json.loads(MINIMAL_SQUARE)
        # skip vertex 2 between consecutive edges
        doc["panels"]["sq"]["edges"][1]["endpoints"] = [1, 3]
        with pytest.raises(SemanticError) as err:
            parse_template(json.dumps(doc))
        diags = err.value.diagnostics
        assert any(d.code == "open-loop" and d.panel == "sq" for d in diags)

    def test_dangling_stitch(self):
        doc = json.loads(MINIMAL_SQUARE)
        doc["stitches"] = [[{"panel": "sq", "edge": 0}, {"panel": "sq", "edge": 9}]]
        with pytest.raises(SemanticError) as err:
            parse_template(json.dumps(doc))
        assert any(d.code == "dangling-edge" for d in err.value.diagnostics)

    def test_duplicate_panel_name(self):
        text = MINIMAL_SQUARE.replace(
            '"panels": {\n    "sq":',
            '"panels": {\n    "sq": {"vertices": [[0,0],[1,0],[1,1]], "edges": '
            '[{"endpoints": [0,1]},{"endpoints": [1,2]},{"endpoints": [2,0]}], '
            '"translation": [0,0,0], "rotation": [0,0,0]},\n    "sq":',
        )
        with pytest.raises(SemanticError, match="duplicate"):
            parse_template(text)

    def test_sample_block_tolerated(self):
        doc = json.loads(MINIMAL_SQUARE)
        doc["sample"] = {"seed": 1, "values": {}}
        parse_template(json.dumps(doc))


class TestValidate:
    def test_valid_pants_pattern_is_clean(self, pants_template):
        assert validate(pants_template.pattern) == []

    def test_stitch_out_of_range(self):
        t = parse_template(MINIMAL_SQUARE)
        pattern = PatternSpec(
            t.pattern.panels,
            (Stitch((EdgeRef("sq", 0), EdgeRef("sq", 9))),),
        )
        diags = validate(pattern)
        assert sum(d.severity == "error" for d in diags) == 1
        assert diags[0].code == "dangling-edge"

    def test_self_loop_edge(self):
        panel = Panel(
            "bad",
            (Vertex2D(0, 0), Vertex2D(1, 0), Vertex2D(1, 1)),
            (Edge(0, 0), Edge(0, 1), Edge(1, 2), Edge(2, 0)),
        )
        diags = validate(PatternSpec((panel,)))
        assert any(d.code == "degenerate-edge" for d in diags)

    def test_malformed_corpus_never_crashes(self):
        fixtures = [
            PatternSpec((Panel("a", (), ()),)),
            PatternSpec((Panel("a", (Vertex2D(0, 0),), (Edge(0, 5), Edge(5, 0), Edge(0, 0))),)),
            PatternSpec(
                (Panel("a", (Vertex2D(0, 0), Vertex2D(0, 0), Vertex2D(1, 1)), (Edge(0, 1), Edge(1, 2), Edge(2, 0))),)
            ),
            PatternSpec(
                (Panel("a", (Vertex2D(0, 0), Vertex2D(float("nan"), 0), Vertex2D(1, 1)), (Edge(0, 1), Edge(1, 2), Edge(2, 0))),)
            ),
        ]
        for pattern in fixtures:
            assert len(validate(pattern)) >= 1

    def test_diagnostic_format(self):
        t = parse_template(MINIMAL_SQUARE)
        pattern = PatternSpec(t.pattern.panels, (Stitch((EdgeRef("sq", 0), EdgeRef("sq", 9))),))
        line = validate(pattern)[0].format("file.json")
        assert line.startswith("file.json:sq:9: error: ")


class TestRoundTrip:
    def test_shipped_templates(self, all_template_paths):
        assert len(all_template_paths) >= 3
        for path in all_template_paths:
            t1 = parse_template(path.read_text())
            text = serialize_template(t1)
            t2 = parse_template(text)
            assert t1 == t2, path.name

    def test_defaults_materialized(self):
        t = parse_template(
            MINIMAL_SQUARE.replace(
                '"rotation": [0, 0, 0]\n    }\n  }\n}',
                '"rotation": [0, 0, 0]\n    }\n  },\n'
                '  "parameters": {"w": {"target": "length", "kind": "multiplicative",'
                ' "range": [0.5, 2], "influence": [{"panel": "sq", "edge": 0}]}}\n}',
            )
        )
        doc = json.loads(serialize_template(t))
        assert doc["parameters"]["w"]["value"] == 1.0
        assert doc["parameter_order"] == ["w"]

    def test_randomized_templates(self):
        rng = np.random.default_rng(2024)
        for k in range(50):
            t1 = random_template(rng)
            t2 = parse_template(serialize_template(t1))
            assert t1 == t2, f"random template {k}"

    def test_serialized_is_deterministic(self, pants_template):
        assert serialize_template(pants_template) == serialize_template(pants_template)


class TestCanonicalize:
    def test_clockwise_square_reversed(self):
        panel = Panel(
            "sq",
            (Vertex2D(0, 0), Vertex2D(0, 2), Vertex2D(2, 2), Vertex2D(2, 0)),
            (Edge(0, 1), Edge(1, 2), Edge(2, 3), Edge(3, 0)),
        )
        canon = canonicalize(PatternSpec((panel,))).panels[0]
        first = canon.edges[0]
        assert canon.vertices[first.start_id] == (0.0, 0.0)
        assert canon.vertices[first.end_id] == (2.0, 0.0)

    def test_panels_sorted_by_translation(self):
        a = Panel("a", (Vertex2D(0, 0), Vertex2D(1, 0), Vertex2D(1, 1)), (Edge(0, 1), Edge(1, 2), Edge(2, 0)), (0, 0, 3))
        b = Panel("b", (Vertex2D(0, 0), Vertex2D(1, 0), Vertex2D(1, 1)), (Edge(0, 1), Edge(1, 2), Edge(2, 0)), (0, 0, -3))
        canon = canonicalize(PatternSpec((a, b)))
        assert [p.name for p in canon.panels] == ["b", "a"]

    def test_reverse_curvature_example(self):
        assert reverse_curvature((0.5, 0.3)) == (0.5, -0.3)
        assert reverse_curvature((0.3, 0.2)) == pytest.approx((0.7, -0.2))

    def test_reversal_preserves_curve_points(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            pattern = random_pattern(rng, max_panels=1)
            canon = canonicalize(pattern)
            before = sampled_points_by_panel(pattern)
            after = sampled_points_by_panel(canon)
            for name in before:
                assert np.allclose(before[name], after[name], atol=1e-9)

    def test_idempotent(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            pattern = random_pattern(rng)
            once = canonicalize(pattern)
            assert canonicalize(once) == once

    def test_stitch_point_sets_preserved(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            pattern = random_pattern(rng)
            canon = canonicalize(pattern)
            originals = {
                frozenset((s.sides[0], s.sides[1])): [
                    sampled_edge_points(pattern, s.sides[0]),
                    sampled_edge_points(pattern, s.sides[1]),
                ]
                for s in pattern.stitches
            }
            assert len(canon.stitches) == len(pattern.stitches)
            matched = 0
            for s in canon.stitches:
                pts = [sampled_edge_points(canon, s.sides[0]), sampled_edge_points(canon, s.sides[1])]
                for key, orig in originals.items():
                    if (
                        np.allclose(pts[0], orig[0], atol=1e-9) and np.allclose(pts[1], orig[1], atol=1e-9)
                    ) or (
                        np.allclose(pts[0], orig[1], atol=1e-9) and np.allclose(pts[1], orig[0], atol=1e-9)
                    ):
                        matched += 1
                        break
            assert matched == len(pattern.stitches)

    def test_template_references_remapped(self, template_dir):
        t = parse_template((template_dir / "skirt_4panel.json").read_text())
        canon = canonicalize_template(t)
        # same design space: every influenced edge maps to the same geometry
        for rule, crule in zip(t.parameters, canon.parameters):
            for entry, centry in zip(rule.influence, crule.influence):
                before = sampled_edge_points(t.pattern, entry.edge_ref)
                after = sampled_edge_points(canon.pattern, centry.edge_ref)
                assert np.allclose(before, after, atol=1e-9)
        assert canonicalize_template(canon) == canon
