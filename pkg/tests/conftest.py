import pytest

from src.fem.elements import clear_cache
from src.geometry.mesh import uniform_box_mesh, write_mesh


@pytest.fixture(scope="module")
def square_mesh():
    return uniform_box_mesh(2, 1)


@pytest.fixture()
def mesh_file(tmp_path, square_mesh):
    path = tmp_path / "square.txt"
    write_mesh(square_mesh, path)
    return path


@pytest.fixture()
def out_dir(tmp_path):
    return tmp_path / "results"


@pytest.fixture(autouse=True, scope="module")
def fresh_element_cache():
    clear_cache()
    yield
    clear_cache()
