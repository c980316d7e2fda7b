"""Trade accuracy for latency with confidence-based early exit.

Run: python3 demos/early_exit.py
"""
from tempdistill.data import spiral_splits
from tempdistill.evaluator import early_exit_grid, full_range_sweep
from tempdistill.trainer import TeacherConfig, TrainConfig, train_student, train_teacher

train, test = spiral_splits(3, 200, 100, 0.2, seed=0)
teacher, _ = train_teacher(train, TeacherConfig(), test)
net = train_student(train, teacher, TrainConfig(T=6), test).net

full = full_range_sweep(net, test, 6).accuracy[6]
print(f"always run 6 steps: accuracy {full:.3f}")
print("cs      accuracy  mean steps")
for r in early_exit_grid(net, test, [0.5, 0.7, 0.8, 0.9, 0.99, 0.999], 6):
    print(f"{r.cs_threshold:<7g} {r.accuracy:.3f}     {r.avg_timesteps:.2f}")
