import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blocksearch.archspec import ArchSpec, compact, count_blocks, format, parse
from blocksearch.blocks import BlockKind
from blocksearch.errors import ContractError, ParseError

S, F, I = BlockKind.SELF_ATTENTION, BlockKind.FEED_FORWARD, BlockKind.IDENTITY


class TestParse:
    def test_alternating(self):
        spec = parse("(sf)x16")
        assert len(spec) == 32
        assert list(spec)[:4] == [S, F, S, F]
        counts = count_blocks(spec)
        assert (counts.n_attention, counts.n_ff) == (16, 16)

    def test_attention_prefix_layout(self):
        spec = parse("(sfff)x6 (f)x8")
        assert len(spec) == 32
        counts = count_blocks(spec)
        assert (counts.n_attention, counts.n_ff) == (6, 26)

    def test_sandwich_order(self):
        spec = parse("(s)x6 (sf)x10 (f)x6")
        assert len(spec) == 32
        counts = count_blocks(spec)
        assert (counts.n_attention, counts.n_ff) == (16, 16)
        assert list(spec)[:6] == [S] * 6
        assert list(spec)[-6:] == [F] * 6

    def test_smallest(self):
        assert list(parse("(f)x1")) == [F]

    def test_empty_group_offset(self):
        with pytest.raises(ParseError) as e:
            parse("()x3")
        assert e.value.offset == 1

    def test_zero_repeat(self):
        with pytest.raises(ParseError) as e:
            parse("(sf)x0")
        assert e.value.offset == 5

    def test_bad_character(self):
        with pytest.raises(ParseError):
            parse("(sg)x2")
        with pytest.raises(ParseError):
            parse("(sf)x2,(f)x1")

    def test_malformed_structures(self):
        for bad in ["", "sf", "(sf", "(sf)", "(sf)x", "(sf)2", "x3", " (f)x1",
                    "(f)x1 ", "(f)x1  (s)", "(F)x1"]:
            with pytest.raises(ParseError):
                parse(bad)

    def test_multi_digit_count(self):
        assert len(parse("(f)x12")) == 12

    @given(st.text(max_size=40))
    @settings(max_examples=300, deadline=None)
    def test_total_over_random_text(self, text):
        # never panics: either a value or a structured error with offset
        try:
            spec = parse(text)
            assert len(spec) >= 1
        except ParseError as e:
            assert 0 <= e.offset <= len(text)

    @given(st.binary(max_size=40))
    @settings(max_examples=200, deadline=None)
    def test_total_over_random_bytes(self, raw):
        try:
            parse(raw.decode("latin-1"))
        except ParseError:
            pass


class TestFormat:
    def test_table_renderings(self):
        assert format(ArchSpec([S, F] * 16)) == "(sf)x16"
        assert format(ArchSpec([S, F, F, F] * 6 + [F] * 8)) == "(sfff)x6 (f)x8"
        assert format(ArchSpec([F])) == "(f)x1"

    def test_identity_rejected(self):
        with pytest.raises(ContractError):
            format(ArchSpec([S, I, F]))

    def test_regrouping_allowed_but_roundtrip_exact(self):
        for text in ["(s)x6 (sf)x10 (f)x6", "(sff)x7 (f)x11", "(sf)x2 (sf)x3"]:
            spec = parse(text)
            assert parse(format(spec)) == spec


@st.composite
def identity_free_specs(draw):
    n = draw(st.integers(min_value=1, max_value=64))
    kinds = draw(st.lists(st.sampled_from([S, F]), min_size=n, max_size=n))
    return ArchSpec(kinds)


class TestRoundTrip:
    @given(identity_free_specs())
    @settings(max_examples=1000, deadline=None)
    def test_parse_format_roundtrip(self, spec):
        assert parse(format(spec)) == spec

    @given(st.text(alphabet="sf()x0123456789 ", max_size=30))
    @settings(max_examples=300, deadline=None)
    def test_counts_sum_to_length(self, text):
        try:
            spec = parse(text)
        except ParseError:
            return
        assert count_blocks(spec).total == len(spec)


class TestCompact:
    def test_drops_identity_preserving_order(self):
        assert compact(ArchSpec([S, I, F])) == ArchSpec([S, F])

    def test_all_identity_becomes_empty(self):
        assert len(compact(ArchSpec([I, I, I]))) == 0

    def test_no_identity_is_noop(self):
        spec = ArchSpec([S, F])
        assert compact(spec) == spec


class TestCounts:
    @pytest.mark.parametrize("text,expected", [
        ("(sfff)x6 (f)x8", (6, 26, 0)),
        ("(sf)x16", (16, 16, 0)),
        ("(f)x32", (0, 32, 0)),
    ])
    def test_table_counts(self, text, expected):
        c = count_blocks(parse(text))
        assert (c.n_attention, c.n_ff, c.n_identity) == expected
