import tempfile
from pathlib import Path
from typing import Annotated

from fastapi import APIRouter, File, Form, HTTPException, UploadFile
from fastapi.responses import Response
from pydantic import ValidationError

from app.core.errors import InpaintingError
from app.core.file_utils import save_upload_to_file
from app.core.imaging import read_image, read_mask, write_image
from app.core.processing import denoise_image, inpaint_image
from app.models.config import SolverConfig, StartStrategy
from app.models.result import InpaintingResult
from logs.logging_config import logger

router = APIRouter()


def _png_response(result: InpaintingResult, tmp_dir: Path) -> Response:
    # the temporary directory is gone once the response is sent, so stream the bytes
    output_path = write_image(tmp_dir / "reconstruction.png", result.image)
    diagnostics = result.diagnostics
    return Response(
        content=output_path.read_bytes(),
        media_type="image/png",
        headers={
            "X-Method": result.method,
            "X-Iterations": str(diagnostics.iterations),
            "X-Converged": str(diagnostics.converged).lower(),
            "X-Objective": f"{diagnostics.objective:.6g}",
            "X-Residual": f"{diagnostics.residual:.3e}",
            "X-Wall-Ms": f"{result.wall_ms:.1f}",
        },
    )


@router.post("/inpaint")
async def inpaint(
    uploaded_image: UploadFile = File(...),
    uploaded_mask: UploadFile = File(...),
    order: Annotated[int, Form()] = 2,
    iterations: Annotated[int, Form()] = 100,
    start: Annotated[StartStrategy, Form()] = StartStrategy.MEAN,
    seed: Annotated[int, Form()] = 0,
):
    logger.info("Starting inpainting of %s with order %d", uploaded_image.filename, order)
    with tempfile.TemporaryDirectory() as tmp_dir_str:
        tmp_dir: Path = Path(tmp_dir_str)
        try:
            image = read_image(save_upload_to_file(uploaded_image, tmp_dir / "image"))
            mask = read_mask(save_upload_to_file(uploaded_mask, tmp_dir / "mask"), image.shape)
            config = SolverConfig(max_iterations=iterations, seed=seed)
            result = inpaint_image(image, mask, order, config, start, seed)
            logger.info("Inpainting done: %d iterations", result.diagnostics.iterations)
            return _png_response(result, tmp_dir)

        except (InpaintingError, ValidationError, ValueError) as e:
            logger.exception("Invalid input for /inpaint")
            raise HTTPException(status_code=422, detail=str(e))
        except Exception as e:
            logger.exception("Error during /inpaint processing")
            raise HTTPException(status_code=500, detail=str(e))


@router.post("/denoise")
async def denoise(
    uploaded_image: UploadFile = File(...),
    epsilon: Annotated[float, Form()] = 50.0,
    order: Annotated[int, Form()] = 2,
    iterations: Annotated[int, Form()] = 100,
    start: Annotated[StartStrategy, Form()] = StartStrategy.MEAN,
    seed: Annotated[int, Form()] = 0,
):
    logger.info("Starting denoising of %s with epsilon %g", uploaded_image.filename, epsilon)
    with tempfile.TemporaryDirectory() as tmp_dir_str:
        tmp_dir: Path = Path(tmp_dir_str)
        try:
            if epsilon <= 0:
                raise ValueError(f"epsilon must be positive, got {epsilon}")
            noisy = read_image(save_upload_to_file(uploaded_image, tmp_dir))
            config = SolverConfig(max_iterations=iterations, seed=seed)
            result = denoise_image(noisy, order, epsilon, config, start, seed)
            logger.info("Denoising done: %d iterations", result.diagnostics.iterations)
            return _png_response(result, tmp_dir)

        except (InpaintingError, ValidationError, ValueError) as e:
            logger.exception("Invalid input for /denoise")
            raise HTTPException(status_code=422, detail=str(e))
        except Exception as e:
            logger.exception("Error during /denoise processing")
            raise HTTPException(status_code=500, detail=str(e))
