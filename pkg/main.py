import logging

from dotenv import load_dotenv

load_dotenv()

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from starlette.responses import RedirectResponse

import routers.experiments
from utils.conf import setup_logging

setup_logging()

logger = (
    logging.getLogger(__name__)
    if __name__ != "__main__"
    else logging.getLogger("uvicorn")
)

app = FastAPI(title="fracspread", description="Fractional influence maximization experiments")

origins = ["*"]

app.add_middleware(
    CORSMiddleware,
    allow_origins=origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(routers.experiments.router, prefix="/api/v1", tags=["Influence Experiments"])


@app.get("/")
def root():
    return RedirectResponse(url="/docs")
