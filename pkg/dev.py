import os

import debugpy
import uvicorn
from dotenv import load_dotenv


def main():
    load_dotenv()

    # Remote debugging on port 5678
    if os.getenv("ENABLE_DEBUGGER", "").lower() == "true":
        debugpy.listen(("0.0.0.0", 5678))
        print("Debugger is listening on port 5678, waiting for client to attach...")
        debugpy.wait_for_client()
        print("Debugger attached")

    uvicorn.run(
        "main:app",
        host=os.getenv("FRACSPREAD_HOST", "0.0.0.0"),
        port=int(os.getenv("FRACSPREAD_PORT", 8000)),
        reload=True,
        reload_dirs=["./"],
        workers=1
    )


if __name__ == "__main__":
    main()
