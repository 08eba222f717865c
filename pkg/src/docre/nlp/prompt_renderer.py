"""
Prompt rendering for every extraction stage

Templates are plain-text files under nlp/templates (see the README there for the
placeholder and brace-escaping rules). Rendering is deterministic: identical
inputs produce identical prompt bytes.
"""
import logging
import string
from functools import lru_cache
from pathlib import Path
from typing import Dict, Optional, Sequence

from src.docre.constants import TEMPLATE_DIR
from src.docre.models.document import Document
from src.docre.models.extraction import ListingMode, Paradigm, PromptStyle, RenderedPrompt, Stage
from src.docre.models.ontology import Relation, RelationOntology

logger = logging.getLogger(__name__)

# Separator for {relation_list}; relation names may themselves contain commas
RELATION_LIST_SEPARATOR = "; "

_FORMATTER = string.Formatter()


class PromptRenderer:
    """Loads templates once and fills their named slots"""

    def __init__(self, template_dir: Path = TEMPLATE_DIR):
        self.template_dir = Path(template_dir)
        self._templates: Dict[str, str] = {}

    def template(self, name: str) -> str:
        if name not in self._templates:
            path = self.template_dir / f"{name}.txt"
            text = path.read_text(encoding="utf-8")
            # Only the file's trailing newline is dropped; inner whitespace is verbatim
            self._templates[name] = text[:-1] if text.endswith("\n") else text
        return self._templates[name]

    @staticmethod
    def placeholders(template: str) -> set:
        return {field for _, field, _, _ in _FORMATTER.parse(template) if field}

    def render(self, name: str, stage: Stage, paradigm: Optional[Paradigm], **slots: str) -> RenderedPrompt:
        template = self.template(name)
        needed = self.placeholders(template)
        missing = needed - slots.keys()
        if missing:
            raise KeyError(f"Template {name} needs slot(s) {sorted(missing)}")
        used = {k: v for k, v in slots.items() if k in needed}
        text = template.format(**used)
        return RenderedPrompt(stage=stage, paradigm=paradigm, template=name, text=text, slots=used)

    # ===== Stage prompts =====

    def relation_listing(
        self,
        doc: Document,
        ontology: RelationOntology,
        mode: ListingMode = ListingMode.WITH_CANDIDATES,
        paradigm: Optional[Paradigm] = None,
    ) -> RenderedPrompt:
        """Relation-listing prompt: candidate list (CHAT) or open listing (TUNED)"""
        if mode is ListingMode.WITH_CANDIDATES:
            return self.render(
                "chat_relation_listing",
                Stage.RELATION_EXTRACTION,
                paradigm,
                sentences=doc.text,
                relation_list=RELATION_LIST_SEPARATOR.join(ontology.names),
            )
        return self.render("tuned_relation_listing", Stage.RELATION_EXTRACTION, paradigm, sentences=doc.text)

    def head(
        self,
        doc: Document,
        relation: Relation,
        with_description: bool = True,
        style: PromptStyle = PromptStyle.CHAT,
        paradigm: Optional[Paradigm] = Paradigm.DRHF,
    ) -> RenderedPrompt:
        """Subject-listing prompt for one relation"""
        use_desc = with_description and bool(relation.description)
        if style is PromptStyle.CHAT:
            name = "chat_head_desc" if use_desc else "chat_head"
        else:
            name = "tuned_head" if use_desc else "tuned_head_nodesc"
        slots = {"sentences": doc.text, "relation": relation.name}
        if use_desc:
            slots["description"] = relation.description
        return self.render(name, Stage.HEAD_EXTRACTION, paradigm, **slots)

    def fact(
        self,
        doc: Document,
        relation: Relation,
        subject: Optional[str] = None,
        with_description: bool = True,
        style: PromptStyle = PromptStyle.CHAT,
        paradigm: Optional[Paradigm] = None,
    ) -> RenderedPrompt:
        """Fact prompt for one relation, optionally pinned to one subject"""
        use_desc = with_description and bool(relation.description)
        base = "fact_subject" if subject is not None else "fact_relation"
        if style is PromptStyle.CHAT:
            name = f"chat_{base}_desc" if use_desc else f"chat_{base}"
        else:
            name = f"tuned_{base}" if use_desc else f"tuned_{base}_nodesc"
        if paradigm is None:
            paradigm = Paradigm.DRHF if subject is not None else Paradigm.DRF
        slots = {"sentences": doc.text, "relation": relation.name}
        if use_desc:
            slots["description"] = relation.description
        if subject is not None:
            slots["subject"] = subject
        return self.render(name, Stage.FACT_EXTRACTION, paradigm, **slots)

    def listed_fact(
        self,
        doc: Document,
        relations: Sequence[Relation],
        style: PromptStyle = PromptStyle.CHAT,
        paradigm: Paradigm = Paradigm.DF,
    ) -> RenderedPrompt:
        """One-shot fact prompt over a relation list (full ontology for D-F, predicted for D-RS-F)"""
        name = "chat_fact_listed" if style is PromptStyle.CHAT else "tuned_fact_listed"
        return self.render(
            name,
            Stage.FACT_EXTRACTION,
            paradigm,
            sentences=doc.text,
            relation_list=RELATION_LIST_SEPARATOR.join(r.name for r in relations),
        )


@lru_cache()
def get_renderer() -> PromptRenderer:
    """Shared renderer over the packaged templates"""
    return PromptRenderer()


def format_fact(head: str, relation_name: str, tail: str) -> str:
    """Canonical triple line: [head, relation, tail]"""
    return f"[{head}, {relation_name}, {tail}]"


def render_relation_listing_prompt(
    doc: Document,
    ontology: RelationOntology,
    mode: ListingMode = ListingMode.WITH_CANDIDATES,
) -> RenderedPrompt:
    return get_renderer().relation_listing(doc, ontology, mode)


def render_head_prompt(
    doc: Document,
    relation: Relation,
    with_description: bool = True,
    style: PromptStyle = PromptStyle.CHAT,
) -> RenderedPrompt:
    return get_renderer().head(doc, relation, with_description, style)


def render_fact_prompt(
    doc: Document,
    relation: Relation,
    subject: Optional[str] = None,
    with_description: bool = True,
    style: PromptStyle = PromptStyle.CHAT,
) -> RenderedPrompt:
    return get_renderer().fact(doc, relation, subject, with_description, style)
