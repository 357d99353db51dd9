from fastapi import FastAPI, HTTPException, BackgroundTasks
from fastapi.responses import JSONResponse
import asyncio
import logging
from contextlib import asynccontextmanager
from typing import Optional
import uuid

from chaincoord.models import *
from chaincoord.database import mongodb
from chaincoord.config import get_settings
from chaincoord.errors import ChainCoordError, InvariantViolation
from chaincoord.finality import catchup_probability, monte_carlo_reversion
from chaincoord.gas import DEFAULT_GAS_SCHEDULE, GWEI, REFERENCE_ETH_PRICE, annual_pin_cost, block_throughput, cost_table
from chaincoord.scenario import parse_scenario
from chaincoord.simulator import compare_strategies, run
from chaincoord.strength import Digest, Signature, StrengthQuery, phaseout_check, strength_bits

settings = get_settings()

logging.basicConfig(
    level=settings.log_level,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Startup and shutdown"""
    logger.info("Starting chaincoord API")
    await mongodb.connect()
    yield
    await mongodb.close()
    logger.info("Shutdown complete")

app = FastAPI(
    title="chaincoord",
    description="Coordination-chain, sidechain pinning and crosschain simulations",
    version="1.0.0",
    lifespan=lifespan
)


def _http_error(e: ChainCoordError) -> HTTPException:
    if isinstance(e, InvariantViolation):
        logger.error(f"Invariant violation: {e}")
        return HTTPException(status_code=500, detail=str(e))
    return HTTPException(status_code=422, detail=str(e))

# ==================== RUNS ====================

@app.post("/run", response_model=JobResponse)
async def start_run(request: RunRequest, background_tasks: BackgroundTasks):
    """Validate a scenario and run it in the background"""
    try:
        config = parse_scenario(request.scenario)
    except ChainCoordError as e:
        raise _http_error(e)

    job_id = str(uuid.uuid4())
    await mongodb.create_job(
        job_id=job_id,
        job_type="run",
        params={"scenario": config.name, "seed": request.seed}
    )
    background_tasks.add_task(_run_task, job_id, config, request.seed)

    return JobResponse(
        job_id=job_id,
        status=JobStatus.PENDING,
        message=f"Running scenario '{config.name}'"
    )

async def _run_task(job_id: str, config: ScenarioConfig, seed: Optional[int]):
    """Background task executing one simulation"""
    try:
        await mongodb.update_job(job_id, JobStatus.PROCESSING.value)
        report = await asyncio.to_thread(run, config, seed)
        payload = report.model_dump(mode="json")
        await mongodb.save_report(job_id, payload)
        summary = {
            "scenario": report.scenario,
            "seed": report.seed,
            "root_blocks": report.root.blocks,
            "pin_transactions": report.root.pin_transactions,
            "crosschain": report.crosschain.model_dump(mode="json"),
        }
        await mongodb.update_job(job_id, JobStatus.COMPLETED.value, result=summary)
    except Exception as e:
        logger.error(f"Run job {job_id} failed: {e}")
        await mongodb.update_job(job_id, JobStatus.FAILED.value, error=str(e))

@app.post("/compare", response_model=List[ComparisonRow])
async def compare(request: CompareRequest):
    """Direct versus hierarchical pinning for the scenario's sidechains"""
    try:
        config = parse_scenario(request.scenario)
        return await asyncio.to_thread(compare_strategies, config)
    except ChainCoordError as e:
        raise _http_error(e)

# ==================== CALCULATORS ====================

@app.get("/finality", response_model=FinalityResponse)
async def finality(q: float, z: int, trials: int = 0, seed: int = 0):
    try:
        analytic = catchup_probability(q, z)
        if trials <= 0:
            return FinalityResponse(q=q, z=z, analytic=analytic)
        estimate = monte_carlo_reversion(
            q, z, trials, seed,
            max_deficit=settings.max_deficit,
            partitions=settings.monte_carlo_partitions,
            workers=settings.monte_carlo_workers,
        )
    except ChainCoordError as e:
        raise _http_error(e)
    return FinalityResponse(
        q=q, z=z, analytic=analytic,
        empirical=estimate.probability, trials=trials, stderr=estimate.stderr
    )

@app.post("/strength", response_model=StrengthResponse)
async def strength(request: StrengthRequest):
    try:
        if request.scheme:
            primitive = Signature(request.scheme)
        elif request.bits:
            primitive = Digest(request.bits, request.truncate)
        else:
            raise HTTPException(status_code=422, detail="give either bits or scheme")
        bits = strength_bits(StrengthQuery(primitive, request.property, request.model))
    except ChainCoordError as e:
        raise _http_error(e)
    return StrengthResponse(
        primitive=primitive.label,
        property=request.property,
        model=request.model,
        bits=bits,
        verdict=phaseout_check(bits).value
    )

@app.get("/throughput")
async def throughput(tx_gas: int = DEFAULT_GAS_SCHEDULE.pin_tx_gas):
    try:
        per_second = block_throughput(tx_gas)
    except ChainCoordError as e:
        raise _http_error(e)
    return {"tx_gas": tx_gas, "per_block": DEFAULT_GAS_SCHEDULE.block_gas_limit // tx_gas,
            "per_second": per_second, "per_minute": per_second * 60}

@app.get("/pin-cost")
async def pin_cost(pin_interval: float = 3600.0, gas_price_gwei: float = 5.95, eth_price: float = REFERENCE_ETH_PRICE):
    gas_price = gas_price_gwei * GWEI
    try:
        annual = annual_pin_cost(DEFAULT_GAS_SCHEDULE, pin_interval, gas_price, eth_price)
        table = cost_table(pin_intervals=(pin_interval,), gas_price=gas_price, eth_price=eth_price)
    except ChainCoordError as e:
        raise _http_error(e)
    return {"pin_interval": pin_interval, "usd_per_year": round(annual, 2), "table": table.to_dict(orient="records")}

# ==================== JOBS ====================

@app.get("/job/{job_id}", response_model=JobDetail)
async def get_job_status(job_id: str):
    """Get job status"""
    job = await mongodb.get_job(job_id)

    if not job:
        raise HTTPException(status_code=404, detail="Job not found")

    return job

@app.get("/report/{job_id}")
async def get_report(job_id: str):
    """Full report of a completed run"""
    report = await mongodb.get_report(job_id)
    if report is None:
        raise HTTPException(status_code=404, detail="Report not found")
    return report

# ==================== HEALTH ====================

@app.get("/health")
async def health_check():
    """Health check"""
    try:
        await mongodb.client.admin.command("ping")
        job_count = await mongodb.db.jobs.count_documents({})
        report_count = await mongodb.db.reports.count_documents({})
        return {
            "status": "healthy",
            "stats": {"total_jobs": job_count, "total_reports": report_count}
        }
    except Exception as e:
        return JSONResponse(
            status_code=503,
            content={"status": "unhealthy", "error": str(e)}
        )

@app.get("/")
async def root():
    return {
        "service": "chaincoord",
        "version": "1.0.0",
        "endpoints": {
            "run": "POST /run",
            "job": "GET /job/{job_id}",
            "report": "GET /report/{job_id}",
            "compare": "POST /compare",
            "finality": "GET /finality",
            "strength": "POST /strength",
            "throughput": "GET /throughput",
            "pin_cost": "GET /pin-cost",
            "health": "GET /health"
        }
    }
