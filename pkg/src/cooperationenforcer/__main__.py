from cooperationenforcer.cli import main

raise SystemExit(main())
