"""
Unit tests for prompt rendering
"""
from dataclasses import replace

import pytest

from src.docre.models.extraction import ListingMode, Paradigm, PromptStyle, Stage
from src.docre.models.ontology import Relation
from src.docre.nlp.prompt_renderer import (
    RELATION_LIST_SEPARATOR,
    PromptRenderer,
    format_fact,
    get_renderer,
    render_fact_prompt,
    render_head_prompt,
    render_relation_listing_prompt,
)


class TestRelationListingPrompt:
    """Relation listing in both modes"""

    def test_with_candidates_lists_every_relation(self, harvard_doc, ontology):
        prompt = render_relation_listing_prompt(harvard_doc, ontology)

        assert prompt.stage is Stage.RELATION_EXTRACTION
        assert prompt.template == "chat_relation_listing"
        assert RELATION_LIST_SEPARATOR.join(ontology.names) in prompt.text
        assert harvard_doc.text in prompt.text
        assert prompt.text.endswith("no relation")

    def test_open_listing_has_no_candidates(self, harvard_doc, ontology):
        prompt = render_relation_listing_prompt(harvard_doc, ontology, ListingMode.OPEN)

        assert prompt.template == "tuned_relation_listing"
        assert prompt.text == f"Given a passage: {harvard_doc.text}, list any underlying relations."
        assert "relation_list" not in prompt.slots

    def test_rendering_is_deterministic(self, harvard_doc, ontology):
        first = render_relation_listing_prompt(harvard_doc, ontology)
        second = PromptRenderer().relation_listing(harvard_doc, ontology)
        assert first.text == second.text


class TestHeadPrompt:
    """Subject listing for one relation"""

    def setup_method(self):
        self.renderer = get_renderer()

    def test_chat_with_description(self, harvard_doc, ontology):
        relation = ontology.get("educated at")
        prompt = render_head_prompt(harvard_doc, relation)

        assert prompt.template == "chat_head_desc"
        assert prompt.paradigm is Paradigm.DRHF
        lines = prompt.text.splitlines()
        assert lines[0] == "Given the relation: educated at."
        assert lines[1] == f"Relation description: {relation.description}"
        assert "serve as the subject of the educated at." in prompt.text

    def test_chat_without_description(self, harvard_doc, ontology):
        prompt = render_head_prompt(harvard_doc, ontology.get("educated at"), with_description=False)

        assert prompt.template == "chat_head"
        assert "Relation description" not in prompt.text
        assert "description" not in prompt.slots

    def test_tuned_variants(self, harvard_doc, ontology):
        relation = ontology.get("country")
        with_desc = self.renderer.head(harvard_doc, relation, True, PromptStyle.TUNED)
        without = self.renderer.head(harvard_doc, relation, False, PromptStyle.TUNED)

        assert with_desc.template == "tuned_head"
        assert f"its description: {relation.description} and a passage" in with_desc.text
        assert without.template == "tuned_head_nodesc"
        assert without.text == (
            f"Given a relation country, and a passage: {harvard_doc.text}, "
            "list entities that can be identified as suitable subjects for the relation."
        )

    def test_empty_description_falls_back(self, harvard_doc, ontology):
        bare = Relation(id="P17", name="country", description="")
        assert self.renderer.head(harvard_doc, bare, True).template == "chat_head"


class TestFactPrompt:
    """Fact prompts for one relation, with or without a fixed subject"""

    def test_subject_prompt(self, harvard_doc, ontology):
        prompt = render_fact_prompt(harvard_doc, ontology.get("country"), "Boston")

        assert prompt.template == "chat_fact_subject_desc"
        assert prompt.paradigm is Paradigm.DRHF
        assert prompt.slots["subject"] == "Boston"
        assert "[Boston,country,object]" in prompt.text
        assert "takes Boston as a subject" in prompt.text

    def test_relation_prompt(self, harvard_doc, ontology):
        prompt = render_fact_prompt(harvard_doc, ontology.get("country"), with_description=False)

        assert prompt.template == "chat_fact_relation"
        assert prompt.paradigm is Paradigm.DRF
        assert "[subject,country, object]" in prompt.text

    def test_tuned_subject_prompt(self, harvard_doc, ontology):
        relation = ontology.get("country")
        prompt = get_renderer().fact(harvard_doc, relation, "Boston", False, PromptStyle.TUNED)

        assert prompt.template == "tuned_fact_subject_nodesc"
        assert prompt.text.endswith("take country as the relation and Boston as the subject.")

    def test_listed_fact_prompt(self, harvard_doc, ontology):
        relations = [ontology.get("country"), ontology.get("spouse")]
        prompt = get_renderer().listed_fact(harvard_doc, relations, paradigm=Paradigm.DRSF)

        assert prompt.template == "chat_fact_listed"
        assert prompt.paradigm is Paradigm.DRSF
        assert "relation list: country; spouse" in prompt.text

    def test_braces_in_passage_are_literal(self, harvard_doc, ontology):
        """Slot values are never re-interpreted as placeholders"""
        doc = replace(harvard_doc, sentences=(("Set", "{relation}", "and", "{0}", "."),))
        prompt = render_fact_prompt(doc, ontology.get("country"), "Set")
        assert "Set {relation} and {0} ." in prompt.text


class TestRendererCore:
    """Template loading and slot checking"""

    def test_missing_slot_raises(self):
        with pytest.raises(KeyError, match="sentences"):
            get_renderer().render("tuned_relation_listing", Stage.RELATION_EXTRACTION, None)

    def test_placeholders(self):
        template = get_renderer().template("chat_fact_subject_desc")
        assert PromptRenderer.placeholders(template) == {"relation", "description", "sentences", "subject"}

    def test_template_drops_only_final_newline(self):
        assert not get_renderer().template("chat_head").endswith("\n")

    def test_format_fact(self):
        assert format_fact("Harvard University", "located in the administrative territorial entity",
                           "Cambridge, Massachusetts") == (
            "[Harvard University, located in the administrative territorial entity, Cambridge, Massachusetts]"
        )
