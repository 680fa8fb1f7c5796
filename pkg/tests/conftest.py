import pytest
import torch


def block_image(size: int = 64, block: int = 8) -> torch.Tensor:
    """Piecewise-constant RGB test image (constant within latent cells)."""
    img = torch.zeros(3, size, size)
    n = size // block
    for i in range(n):
        for j in range(n):
            img[0, i * block:(i + 1) * block, j * block:(j + 1) * block] = i / n
            img[1, i * block:(i + 1) * block, j * block:(j + 1) * block] = j / n
            img[2, i * block:(i + 1) * block, j * block:(j + 1) * block] = (i + j) / (2 * n)
    return img


@pytest.fixture
def image():
    return block_image()


@pytest.fixture
def object_mask():
    m = torch.zeros(64, 64, dtype=torch.bool)
    m[8:24, 8:24] = True
    return m
