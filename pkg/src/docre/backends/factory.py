"""
Build stage routing from a run configuration

    routing.oracle       every stage answered by the gold oracle
    routing.replay_only  every stage served from routing.cache_dir, no network
    otherwise            remote backend; stage_models picks a model per stage,
                         wrapped in a recording cache when cache_dir is set
"""
import logging
from typing import Optional, Sequence

import httpx

from src.docre.config import Config
from src.docre.exceptions import ConfigurationError
from src.docre.models.document import Document
from src.docre.models.extraction import Stage
from src.docre.models.ontology import RelationOntology
from src.docre.schemas import RoutingConfig
from src.docre.cache.response_cache import ResponseCache
from src.docre.backends.base import ChatBackend, StageBinding, StageRouting
from src.docre.backends.oracle import OracleBackend
from src.docre.backends.remote import RemoteChatBackend
from src.docre.backends.replay import ReplayBackend, record_and_replay

logger = logging.getLogger(__name__)


def build_routing(
    routing: RoutingConfig,
    docs: Sequence[Document],
    ontology: RelationOntology,
    transport: Optional[httpx.BaseTransport] = None,
) -> StageRouting:
    """
    Raises:
        ConfigurationError: replay without a cache dir, or a missing API key
    """
    if routing.oracle:
        backend: ChatBackend = OracleBackend(docs, ontology)
        logger.info("Routing all stages to the oracle backend")
        return StageRouting.uniform(StageBinding(backend))

    cache_dir = routing.cache_dir or Config.CACHE_DIR or None
    if routing.replay_only:
        if not cache_dir:
            raise ConfigurationError("replay_only requires a cache_dir")
        backend = ReplayBackend(ResponseCache(cache_dir))
    else:
        backend = RemoteChatBackend(
            api_base=routing.api_base,
            model=routing.model,
            api_key_env=routing.api_key_env,
            transport=transport,
        )
        if cache_dir:
            backend = record_and_replay(ResponseCache(cache_dir), backend)

    bindings = {
        stage: StageBinding(backend, routing.stage_models.get(stage.value, routing.model))
        for stage in Stage
    }
    result = StageRouting(bindings)
    logger.info("Stage routing built", extra={"routing": result.describe()})
    return result
