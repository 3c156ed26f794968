import os
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name: str):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    """Builds the _core extension through the project's CMake tree."""

    def build_extension(self, ext: CMakeExtension) -> None:
        source_dir = Path(__file__).parent.resolve()
        target_path = Path(self.get_ext_fullpath(ext.name)).resolve()
        build_dir = Path(self.build_temp)
        build_dir.mkdir(parents=True, exist_ok=True)

        cmake_args = [
            f"-DPython3_EXECUTABLE={sys.executable}",
            "-DREFAUG_BUILD_TESTS=OFF",
            "-DREFAUG_BUILD_PYTHON=ON",
            f"-DCMAKE_BUILD_TYPE={os.environ.get('REFAUG_BUILD_TYPE', 'Release')}",
        ]
        subprocess.run(["cmake", str(source_dir), *cmake_args], cwd=build_dir, check=True)
        subprocess.run(
            ["cmake", "--build", ".", "--target", "refaug_pyext", "-j"],
            cwd=build_dir,
            check=True,
        )

        target_path.parent.mkdir(parents=True, exist_ok=True)
        built = build_dir / "python" / "refaug"
        artifacts = [p for p in built.iterdir() if p.suffix in (".so", ".pyd", ".dylib")]
        if not artifacts:
            raise RuntimeError(f"no built extension found under {built}")
        self.copy_file(str(artifacts[0]), str(target_path))


setup(
    packages=["refaug"],
    package_dir={"": "python"},
    ext_modules=[CMakeExtension("refaug._core")],
    cmdclass={"build_ext": CMakeBuild},
    zip_safe=False,
)
