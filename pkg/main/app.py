import sys
import os
import uuid
import asyncio
import logging
import datetime
import traceback
import concurrent.futures
from typing import List, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

# Add the project root directory to Python path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

# Import settings to configure environment variables first
from src import settings

from src.egs.certify import (
    BoundRecord,
    DualCertificate,
    VerificationReport,
    parse_certificate,
    verify_dual,
    verify_subfactorization,
)
from src.egs.errors import DomainError, EGSError, ResourceLimitError
from src.egs.greedy import search_t
from src.egs.interval import to_fraction
from src.egs.linprog import t_exact
from src.egs.repair import verify_range
from src.egs.upperbound import best_upper
from src.utils.constants import REPAIR_A, REPAIR_K
from src.utils.helpers import parse_int

logger = logging.getLogger("egs.api")
config = settings.get_settings()
settings.configure_logging()

app = FastAPI(
    title=config["app_name"],
    description="Checks subfactorization and dual certificates for t(N) and reports the best known bounds",
    version=config["version"]
)

# Verification is CPU bound; keep it off the event loop
executor = concurrent.futures.ThreadPoolExecutor(max_workers=config["threads"])


class CertificateRequest(BaseModel):
    certificate: str = Field(..., description="Certificate text in the EGS-CERT or EGS-DUAL format")
    request_id: str = Field(default_factory=lambda: str(uuid.uuid4()), description="Unique request identifier")


class BatchRequest(BaseModel):
    certificates: List[str]
    request_id: str = Field(default_factory=lambda: str(uuid.uuid4()), description="Unique request identifier")


class BatchResponse(BaseModel):
    status: str
    message: str
    reports: List[VerificationReport]


class RepairRequest(BaseModel):
    N_lo: str = "1e11"
    N_hi: Optional[str] = "1e12"
    t_rule: str = "N/3"
    A: int = REPAIR_A
    K: int = REPAIR_K
    L: str = "9/2"


def verify_text_sync(text: str) -> VerificationReport:
    """Parse one certificate and dispatch it to the matching verifier."""
    cert = parse_certificate(text)
    if isinstance(cert, DualCertificate):
        return verify_dual(cert)
    return verify_subfactorization(cert)


def bounds_sync(N: int) -> BoundRecord:
    if N <= config["ip_ceiling"]:
        return t_exact(N)
    lower, _ = search_t(N)
    upper = best_upper(N) if N >= 80 else None
    return BoundRecord(N=N, lower=lower, lower_method="greedy", upper=upper,
                       upper_method="criterion" if upper is not None else None)


def _raise_http(exc: Exception, what: str):
    if isinstance(exc, ResourceLimitError):
        raise HTTPException(status_code=422, detail=str(exc))
    if isinstance(exc, (EGSError, ValueError)):
        raise HTTPException(status_code=400, detail=str(exc))
    logger.error("[API] %s failed: %s\n%s", what, exc, "".join(traceback.format_exception(exc)))
    raise HTTPException(status_code=500, detail=f"Error during {what}: {exc}")


@app.post("/verify", response_model=VerificationReport)
async def verify_certificate(request: CertificateRequest):
    loop = asyncio.get_running_loop()
    try:
        report = await loop.run_in_executor(executor, verify_text_sync, request.certificate)
    except Exception as e:
        _raise_http(e, "verification")
    logger.info("[API] request %s: %s N=%d t=%d accepted=%s",
                request.request_id, report.kind, report.N, report.t, report.accepted)
    return report


def verify_dual_sync(text: str) -> VerificationReport:
    cert = parse_certificate(text)
    if not isinstance(cert, DualCertificate):
        raise DomainError("expected an EGS-DUAL certificate")
    return verify_dual(cert)


@app.post("/verify-dual", response_model=VerificationReport)
async def verify_dual_certificate(request: CertificateRequest):
    loop = asyncio.get_running_loop()
    try:
        report = await loop.run_in_executor(executor, verify_dual_sync, request.certificate)
    except Exception as e:
        _raise_http(e, "dual verification")
    logger.info("[API] request %s: dual N=%d t=%d accepted=%s",
                request.request_id, report.N, report.t, report.accepted)
    return report


@app.post("/verify-batch", response_model=BatchResponse)
async def verify_batch(request: BatchRequest):
    start_time = datetime.datetime.utcnow()
    loop = asyncio.get_running_loop()
    futures = [loop.run_in_executor(executor, verify_text_sync, text) for text in request.certificates]
    results = await asyncio.gather(*futures, return_exceptions=True)

    reports = []
    for result in results:
        if isinstance(result, Exception):
            _raise_http(result, "batch verification")
        reports.append(result)

    accepted = sum(1 for r in reports if r.accepted)
    elapsed = (datetime.datetime.utcnow() - start_time).total_seconds()
    status = "success" if accepted == len(reports) else "partial"
    return BatchResponse(
        status=status,
        message=f"{accepted} of {len(reports)} certificates accepted in {elapsed:.2f} seconds",
        reports=reports,
    )


@app.get("/bounds/{N}", response_model=BoundRecord)
async def bounds(N: int):
    if N < 1:
        raise HTTPException(status_code=400, detail="N must be positive")
    loop = asyncio.get_running_loop()
    try:
        return await loop.run_in_executor(executor, bounds_sync, N)
    except Exception as e:
        _raise_http(e, "bound computation")


@app.post("/repair")
async def repair(request: RepairRequest):
    loop = asyncio.get_running_loop()
    try:
        N_lo = parse_int(request.N_lo)
        N_hi = None if request.N_hi in (None, "inf") else parse_int(request.N_hi)
        report = await loop.run_in_executor(
            executor, verify_range, N_lo, N_hi, request.t_rule, request.A, request.K, to_fraction(request.L)
        )
    except Exception as e:
        _raise_http(e, "repair verification")
    return report.to_json()


@app.get("/health")
def health_check():
    return {"status": "healthy", "version": config["version"], "environment": settings.ENV}


# Run the FastAPI app with uvicorn if executed directly
if __name__ == "__main__":
    import uvicorn
    uvicorn.run("app:app", host="0.0.0.0", port=8000, reload=config["debug"])
