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

import sys

from .cli import main

sys.exit(main())
