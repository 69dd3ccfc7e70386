"""HTTP front end for the run engine.

Runs operate on server-local paths, so deploy this only where clients
are trusted with the filesystem (it is meant for a lab box or a local
workstation, not the open internet). Error bodies carry a category the
thin client maps back to process exit codes: usage (422), io (400),
degeneracy (409).
"""

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import __version__, pipeline
from .errors import DegeneracyError, ParseError
from .schemas import (
    ConvertRequest,
    EvalRequest,
    MetricsReport,
    PhantomReport,
    PhantomRequest,
    RunReport,
    SegmentRequest,
)


def create_app() -> FastAPI:
    app = FastAPI(title="octseg", version=__version__)

    @app.exception_handler(ParseError)
    async def parse_error(request: Request, exc: ParseError):
        return JSONResponse(status_code=400, content={"category": "io", "message": str(exc)})

    @app.exception_handler(FileNotFoundError)
    @app.exception_handler(NotADirectoryError)
    @app.exception_handler(PermissionError)
    async def io_error(request: Request, exc: OSError):
        return JSONResponse(status_code=400, content={"category": "io", "message": str(exc)})

    @app.exception_handler(DegeneracyError)
    async def degeneracy(request: Request, exc: DegeneracyError):
        return JSONResponse(
            status_code=409, content={"category": "degeneracy", "message": str(exc)}
        )

    @app.exception_handler(ValueError)
    async def usage_error(request: Request, exc: ValueError):
        return JSONResponse(status_code=422, content={"category": "usage", "message": str(exc)})

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/segment", response_model=RunReport)
    def segment(req: SegmentRequest):
        return pipeline.run_segment(req)

    @app.post("/convert", response_model=RunReport)
    def convert(req: ConvertRequest):
        return pipeline.run_convert(req)

    @app.post("/phantom", response_model=PhantomReport)
    def phantom(req: PhantomRequest):
        return pipeline.run_phantom(req)

    @app.post("/eval", response_model=MetricsReport)
    def evaluate(req: EvalRequest):
        return pipeline.run_eval(req)

    return app


app = create_app()
