# wnoskit - Turn centralized network control programs into distributed solvers
# Copyright (C) 2019-2020 wnoskit contributors
#
# This file is part of wnoskit.
#
# wnoskit is free software: you can redistribute it and/or modify
# it under the terms of the GNU Lesser General Public License as published
# by the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# wnoskit is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU Lesser General Public License for more details.
#
# You should have received a copy of the GNU Lesser General Public License
# along with wnoskit.  If not, see <http://www.gnu.org/licenses/>.

import setuptools

with open("README.md", "r") as fh:
    long_description = fh.read()


setuptools.setup(
    name="wnoskit",
    version="0.1.0",
    author="wnoskit contributors",
    description="Turn centralized network control programs into distributed cross-layer solvers",
    long_description=long_description,
    long_description_content_type="text/markdown",
    packages=setuptools.find_packages(exclude=["tests"]),
    package_data={"wnoskit": ["programs/*.wnos", "scenarios/*.ini"]},
    classifiers=[
        "Programming Language :: Python :: 3",
        "Operating System :: OS Independent",
        "License :: OSI Approved :: GNU Lesser General Public License v3 (LGPLv3)",
    ],
    python_requires=">=3.8",
    install_requires=[
        "trio",
        "ziproto",
        "numpy",
        "scipy",
        "pandas>=1.5",
        "matplotlib",
        "networkx",
        "sympy",
        "simpy",
    ],
    entry_points={"console_scripts": ["wnoskit = wnoskit.cli:main"]},
)
