"""Run"""

from os import getenv

from dotenv import load_dotenv

from nematic import create_solver
from nematic.commands import cli

load_dotenv()

config_name = getenv("NEMATIC_CONFIG", "development")


if __name__ == "__main__":
    cli(obj=create_solver(config_name))
