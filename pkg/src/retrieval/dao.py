from src.dao.base_dao import BaseDAO
from src.retrieval.schemas import CacheEntry


class CacheDAO(BaseDAO[CacheEntry]):
    """Post-processed retrieval results keyed by request fingerprint; never expires."""

    model = CacheEntry
