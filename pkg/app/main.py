from fastapi import FastAPI

from app.api.endpoints import router as app_router
from logs.logging_config import configure_loggers

configure_loggers()

app = FastAPI(title="spline-tv-inpainting")
app.include_router(app_router)
