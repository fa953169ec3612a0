import sys

from dotenv import load_dotenv

from app.controller.cli_controller import run


load_dotenv()


def main() -> int:
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
