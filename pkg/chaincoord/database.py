from motor.motor_asyncio import AsyncIOMotorClient
from typing import Dict, Optional, Any
import logging
from datetime import datetime, timezone
from chaincoord.config import get_settings

logger = logging.getLogger(__name__)


def _now() -> datetime:
    return datetime.now(timezone.utc)


class MongoDB:
    def __init__(self):
        self.client = None
        self.db = None

    async def connect(self):
        """Connect to MongoDB"""
        settings = get_settings()
        self.client = AsyncIOMotorClient(settings.mongodb_url)
        self.db = self.client[settings.database_name]
        logger.info("Connected to MongoDB")

    async def close(self):
        """Close MongoDB connection"""
        if self.client:
            self.client.close()
            logger.info("Closed MongoDB connection")

    # Jobs collection
    async def create_job(self, job_id: str, job_type: str, params: Dict) -> Dict:
        """Create a background job"""
        job = {
            "job_id": job_id,
            "type": job_type,
            "status": "pending",
            "params": params,
            "created_at": _now(),
            "updated_at": _now(),
            "result": None,
            "error": None
        }
        await self.db.jobs.insert_one(dict(job))
        return job

    async def update_job(self, job_id: str, status: str, result: Any = None, error: str = None):
        """Update job status"""
        update = {
            "status": status,
            "updated_at": _now()
        }
        if result is not None:
            update["result"] = result
        if error is not None:
            update["error"] = error

        await self.db.jobs.update_one(
            {"job_id": job_id},
            {"$set": update}
        )
        logger.info(f"Job {job_id}: {status}")

    async def get_job(self, job_id: str) -> Optional[Dict]:
        """Get job by ID"""
        return await self.db.jobs.find_one({"job_id": job_id}, {"_id": 0})

    # Reports collection
    async def save_report(self, job_id: str, report: Dict):
        """Store a finished run report under its job id"""
        await self.db.reports.update_one(
            {"job_id": job_id},
            {"$set": {"job_id": job_id, "report": report, "saved_at": _now()}},
            upsert=True
        )

    async def get_report(self, job_id: str) -> Optional[Dict]:
        doc = await self.db.reports.find_one({"job_id": job_id}, {"_id": 0})
        return doc["report"] if doc else None


# Global instance
mongodb = MongoDB()
