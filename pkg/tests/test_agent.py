"""Agent loop: prompt assembly, output parsing, tool dispatch, turn budget."""

import pytest

from intentkit.agent import (
    DEFAULT_MAX_TURNS,
    EMPTY_RETRIEVAL_TEXT,
    FORCED_RETRIEVAL_EXTRA,
    FORMAT_REMINDER,
    MUST_RETRIEVE_REMINDER,
    NO_TOOL_REMINDER,
    NO_TOOL_TEXT,
    OUTPUT_FORMAT_TEXT,
    ParsedAnswer,
    ParsedMalformed,
    ParsedToolCall,
    StrategyMode,
    TOOL_SIGNATURE_TEXT,
    build_system_prompt,
    parse_output,
    render_context_message,
    render_tool_response,
    run_inference,
    validate_trajectory,
)
from intentkit.errors import ScriptExhaustedError
from intentkit.library import IntentHistoryLibrary
from intentkit.llm import (
    AnswerStep,
    MalformedStep,
    ScriptedLLM,
    ToolCallStep,
    render_answer,
    render_tool_call,
)
from intentkit.types import (
    Context,
    IntentExplanation,
    Message,
    NO_MATCH,
    Taxonomy,
    Trajectory,
)

from conftest import SpyLibrary


@pytest.fixture
def ctx():
    return Context(user="u1", situational_text="", action_text="shared a chart")


@pytest.fixture
def spy_library(colors, embedder):
    lib = SpyLibrary(colors, embedder)
    lib.insert("u1", "red", IntentExplanation("shared a chart of heart rate"))
    lib.insert("u1", "green", IntentExplanation("asked about watering schedules"))
    lib.insert("u1", "red", IntentExplanation("posted a graph of step counts"))
    return lib


class TestPromptAssembly:
    def test_self_decided_offers_tool(self, colors):
        prompt = build_system_prompt(colors, StrategyMode.SELF_DECIDED)
        assert TOOL_SIGNATURE_TEXT in prompt
        assert NO_TOOL_TEXT not in prompt
        assert FORCED_RETRIEVAL_EXTRA not in prompt

    def test_forced_no_retrieval_hides_tool(self, colors):
        prompt = build_system_prompt(colors, StrategyMode.FORCED_NO_RETRIEVAL)
        assert NO_TOOL_TEXT in prompt
        assert TOOL_SIGNATURE_TEXT not in prompt

    def test_forced_retrieval_adds_requirement(self, colors):
        prompt = build_system_prompt(colors, StrategyMode.FORCED_RETRIEVAL)
        assert TOOL_SIGNATURE_TEXT in prompt
        assert FORCED_RETRIEVAL_EXTRA in prompt

    def test_taxonomy_and_format_inlined(self, colors):
        prompt = build_system_prompt(colors)
        assert "red, green, blue, amber" in prompt
        assert OUTPUT_FORMAT_TEXT in prompt
        assert "{taxonomy}" not in prompt
        assert "{tool_signature}" not in prompt
        assert "{output_format}" not in prompt

    def test_custom_template(self, colors):
        prompt = build_system_prompt(colors, template_text="labels: {taxonomy}!")
        assert prompt == "labels: red, green, blue, amber!"


class TestContextMessage:
    def test_minimal(self, ctx):
        assert render_context_message(ctx) == "User: u1\nAction: shared a chart"

    def test_background_included_when_present(self):
        ctx = Context(user="u1", situational_text="late night", action_text="a")
        assert "Background: late night" in render_context_message(ctx)

    def test_meta_keys_sorted(self):
        ctx = Context(
            user="u1",
            situational_text="",
            action_text="a",
            meta={"zone": "b", "app": "fitness"},
        )
        rendered = render_context_message(ctx)
        assert rendered.index("app: fitness") < rendered.index("zone: b")


class TestParseOutput:
    def test_plain_answer(self):
        parsed = parse_output("<answer>warn</answer>")
        assert parsed == ParsedAnswer(label_raw="warn", explanation="")

    def test_answer_with_explanation(self):
        parsed = parse_output(render_answer("warn", "[Context] stormy"))
        assert parsed == ParsedAnswer(label_raw="warn", explanation="[Context] stormy")

    def test_answer_whitespace_stripped(self):
        parsed = parse_output("<answer>\n  warn \n</answer>")
        assert parsed.label_raw == "warn"

    def test_empty_answer_is_malformed(self):
        assert isinstance(parse_output("<answer>  </answer>"), ParsedMalformed)

    def test_tool_call_with_user(self):
        parsed = parse_output(render_tool_call(["warn", "joke"], user="u1"))
        assert parsed == ParsedToolCall(options=("warn", "joke"), user="u1")

    def test_tool_call_without_user(self):
        parsed = parse_output(render_tool_call(["warn"]))
        assert parsed == ParsedToolCall(options=("warn",), user=None)

    def test_tool_call_single_quotes(self):
        parsed = parse_output("retrieve_intent_context(intent_options=['a', 'b'])")
        assert parsed == ParsedToolCall(options=("a", "b"), user=None)

    def test_options_deduped_on_canonical_form(self):
        parsed = parse_output(
            'retrieve_intent_context(intent_options=["Warn", "warn", "joke"])'
        )
        assert parsed.options == ("Warn", "joke")

    def test_tool_call_without_options_is_malformed(self):
        assert isinstance(
            parse_output('retrieve_intent_context(user="u1")'), ParsedMalformed
        )

    def test_tool_call_with_blank_options_is_malformed(self):
        parsed = parse_output('retrieve_intent_context(intent_options=["  ", ""])')
        assert isinstance(parsed, ParsedMalformed)

    def test_earlier_block_wins_answer_first(self):
        text = "<answer>warn</answer> then " + render_tool_call(["joke"])
        assert isinstance(parse_output(text), ParsedAnswer)

    def test_earlier_block_wins_tool_first(self):
        text = render_tool_call(["joke"]) + " then <answer>warn</answer>"
        assert isinstance(parse_output(text), ParsedToolCall)

    def test_free_text_is_malformed(self):
        parsed = parse_output("hmm, tough one")
        assert isinstance(parsed, ParsedMalformed)
        assert parsed.reason


class TestToolResponseRendering:
    def test_empty(self, spy_library):
        result = spy_library.retrieve("nobody", ["red"], "anything")
        assert render_tool_response(result) == EMPTY_RETRIEVAL_TEXT

    def test_numbered_rank_order(self, spy_library):
        result = spy_library.retrieve("u1", ["red", "green"], "shared a chart", k=2)
        rendered = render_tool_response(result)
        lines = rendered.splitlines()
        assert len(lines) == 2
        assert lines[0].startswith("1. (u1, ")
        assert lines[1].startswith("2. (u1, ")


class TestRunInference:
    def test_direct_answer(self, ctx, colors, spy_library):
        backend = ScriptedLLM([AnswerStep("red", "[Context] chart")])
        outcome = run_inference(
            ctx, colors, spy_library, StrategyMode.SELF_DECIDED, backend
        )
        assert outcome.predicted == "red"
        assert outcome.answered is True
        assert outcome.tool_called is False
        assert outcome.options_emitted is None
        assert outcome.turns_used == 1
        assert [m.role for m in outcome.trajectory.messages] == [
            "system",
            "user",
            "assistant",
        ]
        assert outcome.trajectory.final_label == "red"
        assert outcome.trajectory.final_explanation == "[Context] chart"
        assert spy_library.retrieve_calls == []
        validate_trajectory(outcome.trajectory)

    def test_tool_then_answer(self, ctx, colors, spy_library):
        backend = ScriptedLLM(
            [ToolCallStep(("red", "green")), AnswerStep("red")]
        )
        outcome = run_inference(
            ctx, colors, spy_library, StrategyMode.SELF_DECIDED, backend
        )
        assert outcome.predicted == "red"
        assert outcome.tool_called is True
        assert outcome.options_emitted == ("red", "green")
        assert outcome.turns_used == 2
        assert spy_library.retrieve_calls == [("u1", ("red", "green"))]
        tool_msgs = outcome.trajectory.tool_messages
        assert len(tool_msgs) == 1
        assert "shared a chart of heart rate" in tool_msgs[0].content
        validate_trajectory(outcome.trajectory)

    def test_repeat_tool_call_memoized(self, ctx, colors, spy_library):
        backend = ScriptedLLM(
            [
                ToolCallStep(("red", "green")),
                ToolCallStep(("green", "RED")),  # same set after canonicalization
                AnswerStep("red"),
            ]
        )
        outcome = run_inference(
            ctx, colors, spy_library, StrategyMode.SELF_DECIDED, backend
        )
        assert len(spy_library.retrieve_calls) == 1
        tool_msgs = outcome.trajectory.tool_messages
        assert len(tool_msgs) == 2
        assert tool_msgs[0].content == tool_msgs[1].content

    def test_distinct_tool_calls_both_query(self, ctx, colors, spy_library):
        backend = ScriptedLLM(
            [
                ToolCallStep(("red",)),
                ToolCallStep(("green", "red")),
                AnswerStep("green"),
            ]
        )
        outcome = run_inference(
            ctx, colors, spy_library, StrategyMode.SELF_DECIDED, backend
        )
        assert len(spy_library.retrieve_calls) == 2
        # union preserves first-seen order without duplicates
        assert outcome.options_emitted == ("red", "green")

    def test_unknown_option_passed_through(self, ctx, colors, spy_library):
        backend = ScriptedLLM(
            [ToolCallStep(("red", "purple")), AnswerStep("red")]
        )
        outcome = run_inference(
            ctx, colors, spy_library, StrategyMode.SELF_DECIDED, backend
        )
        assert outcome.options_emitted == ("red", "purple")
        assert spy_library.retrieve_calls == [("u1", ("red", "purple"))]

    def test_retrieval_query_uses_action_text_and_k(self, ctx, colors, spy_library):
        backend = ScriptedLLM([ToolCallStep(("red", "green")), AnswerStep("red")])
        outcome = run_inference(
            ctx, colors, spy_library, StrategyMode.SELF_DECIDED, backend, k=1
        )
        tool_msg = outcome.trajectory.tool_messages[0].content
        assert len(tool_msg.splitlines()) == 1
        # the chart-sharing entry outranks the watering one for this action
        assert "heart rate" in tool_msg

    def test_forced_no_retrieval_refuses_tool(self, ctx, colors, spy_library):
        backend = ScriptedLLM([ToolCallStep(("red", "green")), AnswerStep("red")])
        outcome = run_inference(
            ctx, colors, spy_library, StrategyMode.FORCED_NO_RETRIEVAL, backend
        )
        assert outcome.predicted == "red"
        assert outcome.tool_called is False
        assert outcome.options_emitted is None
        assert spy_library.retrieve_calls == []
        contents = [m.content for m in outcome.trajectory.messages]
        assert NO_TOOL_REMINDER in contents
        assert outcome.trajectory.tool_messages == ()

    def test_forced_retrieval_bounces_direct_answer(self, ctx, colors, spy_library):
        backend = ScriptedLLM(
            [
                AnswerStep("red"),
                ToolCallStep(("red", "green")),
                AnswerStep("red"),
            ]
        )
        outcome = run_inference(
            ctx, colors, spy_library, StrategyMode.FORCED_RETRIEVAL, backend
        )
        assert outcome.predicted == "red"
        assert outcome.tool_called is True
        assert outcome.turns_used == 3
        contents = [m.content for m in outcome.trajectory.messages]
        assert MUST_RETRIEVE_REMINDER in contents

    def test_forced_retrieval_accepts_answer_after_tool(self, ctx, colors, spy_library):
        backend = ScriptedLLM([ToolCallStep(("red",)), AnswerStep("red")])
        outcome = run_inference(
            ctx, colors, spy_library, StrategyMode.FORCED_RETRIEVAL, backend
        )
        assert outcome.predicted == "red"
        assert outcome.turns_used == 2

    def test_malformed_gets_format_reminder(self, ctx, colors, spy_library):
        backend = ScriptedLLM([MalformedStep(), AnswerStep("red")])
        outcome = run_inference(
            ctx, colors, spy_library, StrategyMode.SELF_DECIDED, backend
        )
        assert outcome.predicted == "red"
        assert outcome.turns_used == 2
        contents = [m.content for m in outcome.trajectory.messages]
        assert FORMAT_REMINDER in contents

    def test_out_of_vocabulary_answer(self, ctx, colors, spy_library):
        backend = ScriptedLLM([AnswerStep("mauve")])
        outcome = run_inference(
            ctx, colors, spy_library, StrategyMode.SELF_DECIDED, backend
        )
        assert outcome.predicted is NO_MATCH
        assert outcome.answered is True
        assert outcome.trajectory.final_label is None

    def test_cosmetic_label_variant_canonicalized(self, ctx, colors, spy_library):
        backend = ScriptedLLM([AnswerStep("  RED ")])
        outcome = run_inference(
            ctx, colors, spy_library, StrategyMode.SELF_DECIDED, backend
        )
        assert outcome.predicted == "red"

    def test_turn_budget_exhaustion(self, ctx, colors, spy_library):
        backend = ScriptedLLM([MalformedStep()] * 3)
        outcome = run_inference(
            ctx, colors, spy_library, StrategyMode.SELF_DECIDED, backend, max_turns=3
        )
        assert outcome.predicted is NO_MATCH
        assert outcome.answered is False
        assert outcome.turns_used == 3

    def test_default_turn_budget(self, ctx, colors, spy_library):
        backend = ScriptedLLM([MalformedStep()] * DEFAULT_MAX_TURNS)
        outcome = run_inference(
            ctx, colors, spy_library, StrategyMode.SELF_DECIDED, backend
        )
        assert outcome.answered is False
        assert backend.steps_remaining == 0

    def test_max_turns_validated(self, ctx, colors, spy_library):
        with pytest.raises(ValueError):
            run_inference(
                ctx,
                colors,
                spy_library,
                StrategyMode.SELF_DECIDED,
                ScriptedLLM([]),
                max_turns=0,
            )

    def test_mode_accepts_plain_string(self, ctx, colors, spy_library):
        backend = ScriptedLLM([AnswerStep("red")])
        outcome = run_inference(ctx, colors, spy_library, "self_decided", backend)
        assert outcome.predicted == "red"

    def test_backend_error_carries_partial_trajectory(self, ctx, colors, spy_library):
        backend = ScriptedLLM([])
        with pytest.raises(ScriptExhaustedError) as excinfo:
            run_inference(ctx, colors, spy_library, StrategyMode.SELF_DECIDED, backend)
        trajectory = excinfo.value.trajectory
        assert isinstance(trajectory, Trajectory)
        assert [m.role for m in trajectory.messages] == ["system", "user"]


class TestValidateTrajectory:
    def test_accepts_well_formed(self, ctx, colors, spy_library):
        backend = ScriptedLLM([ToolCallStep(("red",)), AnswerStep("red")])
        outcome = run_inference(
            ctx, colors, spy_library, StrategyMode.SELF_DECIDED, backend
        )
        validate_trajectory(outcome.trajectory)

    def test_rejects_masked_assistant(self):
        trajectory = Trajectory(
            messages=(
                Message.system("s"),
                Message("assistant", "<answer>x</answer>", loss_masked=True),
            )
        )
        with pytest.raises(ValueError, match="loss_masked"):
            validate_trajectory(trajectory)

    def test_rejects_unmasked_user(self):
        trajectory = Trajectory(
            messages=(
                Message.system("s"),
                Message("user", "q", loss_masked=False),
            )
        )
        with pytest.raises(ValueError, match="loss_masked"):
            validate_trajectory(trajectory)

    def test_rejects_tool_after_non_call(self):
        trajectory = Trajectory(
            messages=(
                Message.system("s"),
                Message.assistant("just chatting"),
                Message.tool("1. (u1, red, e)"),
            )
        )
        with pytest.raises(ValueError, match="retrieval call"):
            validate_trajectory(trajectory)
