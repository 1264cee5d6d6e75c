from sqlalchemy import Column, Integer, String, Text, DateTime, func
import uuid
from app.db.database import Base


class ExperimentRun(Base):
    __tablename__ = "experiment_runs"

    id = Column(String(36), primary_key=True, default=lambda: str(uuid.uuid4()))
    monoid = Column(Text, nullable=False)
    statistic = Column(Text, nullable=False)
    k = Column(Integer, nullable=False)
    count = Column(Integer, nullable=False)
    seed = Column(Integer, nullable=False)
    status = Column(Text, nullable=False, default="completed")
    report_json = Column(Text, nullable=True)
    csv_path = Column(Text, nullable=True)
    error_message = Column(Text, nullable=True)
    created_at = Column(DateTime(timezone=True), server_default=func.now())
